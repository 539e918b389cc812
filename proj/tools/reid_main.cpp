// Experiment driver: generate synthetic identity data, run stagewise
// training, evaluate retrieval, dump ranked results, and sweep the ablation
// variants. Outputs are plain files under --out (or $TRANGCN_OUT).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reid/checkpoint.hpp"
#include "reid/config.hpp"
#include "reid/dataset.hpp"
#include "reid/manifest.hpp"
#include "reid/metrics.hpp"
#include "reid/model.hpp"
#include "reid/png_io.hpp"
#include "reid/render.hpp"
#include "reid/train.hpp"

namespace fs = std::filesystem;
using namespace reid;

namespace {

struct CommonOpts {
  std::string config_file;
  std::string out_dir;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts* common) {
  cmd->add_option("--config", common->config_file, "flat key=value config file");
  cmd->add_option("--out", common->out_dir, "output directory (default $TRANGCN_OUT/<command>)");
}

std::string resolve_out_dir(const CommonOpts& common, const std::string& command) {
  if (!common.out_dir.empty()) return common.out_dir;
  if (const char* root = std::getenv("TRANGCN_OUT"); root && *root)
    return (fs::path(root) / command).string();
  throw ConfigError("no --out given and TRANGCN_OUT is not set");
}

// defaults <- config file <- CLI overrides
KvConfig resolve_config(const CommonOpts& common) {
  KvConfig kv;
  if (!common.config_file.empty()) kv = KvConfig::from_file(common.config_file);
  for (const auto& [k, v] : common.overrides) kv.set(k, v);
  return kv;
}

struct Resolved {
  ModelConfig model;
  TrainConfig train;
  GenConfig gen;
  KvConfig effective;  // full dump, hashed into the manifest
};

Resolved resolve_all(const CommonOpts& common) {
  Resolved r;
  KvConfig kv = resolve_config(common);
  apply_config(kv, &r.model, &r.train, &r.gen);
  r.model.width = r.gen.width;
  r.model.height = r.gen.height;
  r.effective = dump_config(r.model, r.train, r.gen);
  return r;
}

RunManifest start_run(const std::string& command, const CommonOpts& common, const Resolved& r) {
  RunManifest m;
  m.command = command;
  m.config_path = common.config_file;
  m.config_hash = r.effective.hash();
  m.seed = r.train.seed;
  m.out_dir = resolve_out_dir(common, command);
  m.write();
  return m;
}

void write_effective_config(const Resolved& r, const std::string& dir) {
  std::ofstream f(fs::path(dir) / "config.txt");
  if (!f) throw DataError("cannot write config.txt in " + dir);
  f << r.effective.resolved_text();
}

int parse_identity_from_name(const std::string& name) {
  static const std::regex market(R"(^(-?\d+)_c(\d+))");
  static const std::regex synth(R"(^img_(\d+)_)");
  std::smatch m;
  if (std::regex_search(name, m, market)) return std::stoi(m[1].str());
  if (std::regex_search(name, m, synth)) return std::stoi(m[1].str());
  return -1;
}

// ---------------- commands ----------------

int cmd_generate(const CommonOpts& common) {
  Resolved r = resolve_all(common);
  r.gen.validate();
  RunManifest manifest = start_run("generate", common, r);
  write_effective_config(r, manifest.out_dir);
  Dataset data = generate_synthetic(r.gen);
  export_dataset(data, manifest.out_dir);
  std::vector<std::string> files = {"config.txt", "dataset.txt"};
  for (const char* split : {"train", "query", "gallery"})
    files.push_back(std::string(split) + "/manifest.txt");
  manifest.append_checksums(files);
  std::cout << "generated " << data.train.items.size() << " train / " << data.query.items.size()
            << " query / " << data.gallery.items.size() << " gallery images in "
            << manifest.out_dir << "\n";
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_dir) {
  Resolved r = resolve_all(common);
  Dataset data = load_dataset(data_dir);
  if (data.num_identities >= 2) r.model.num_classes = data.num_identities;
  r.model.width = data.width > 0 ? data.width : r.model.width;
  r.model.height = data.height > 0 ? data.height : r.model.height;
  r.effective = dump_config(r.model, r.train, r.gen);
  RunManifest manifest = start_run("train", common, r);
  write_effective_config(r, manifest.out_dir);

  Model model(r.model);
  TrainResult result = train_stagewise(model, r.train, data, manifest.out_dir);
  save_checkpoint((fs::path(manifest.out_dir) / "checkpoint.bin").string(), result.params);
  result.log.write_csv((fs::path(manifest.out_dir) / "train_log.csv").string());
  manifest.append_checksums({"config.txt", "checkpoint.bin", "train_log.csv"});
  std::cout << "trained variant " << to_string(r.model.variant) << ", checkpoint in "
            << manifest.out_dir << "\n";
  return 0;
}

ModelConfig config_for_checkpoint(const CommonOpts& common, const std::string& ckpt) {
  // the train run leaves config.txt next to its checkpoint
  CommonOpts effective = common;
  if (effective.config_file.empty()) {
    const fs::path beside = fs::path(ckpt).parent_path() / "config.txt";
    if (fs::exists(beside)) effective.config_file = beside.string();
  }
  Resolved r = resolve_all(effective);
  r.model.num_classes = std::max(r.model.num_classes, 2);
  return r.model;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt, const std::string& data_dir) {
  CommonOpts effective = common;
  const fs::path beside = fs::path(ckpt).parent_path() / "config.txt";
  if (effective.config_file.empty() && fs::exists(beside))
    effective.config_file = beside.string();
  Resolved r = resolve_all(effective);
  Dataset data = load_dataset(data_dir);
  if (data.num_identities >= 2) r.model.num_classes = data.num_identities;
  if (data.width > 0) r.model.width = data.width;
  if (data.height > 0) r.model.height = data.height;
  r.effective = dump_config(r.model, r.train, r.gen);
  RunManifest manifest = start_run("eval", common, r);

  Model model(r.model);
  ParamStore params = load_checkpoint_validated(ckpt, model.init(r.train.seed));
  RetrievalRun run = build_retrieval_run(model, params, data);
  MetricsReport report = evaluate_retrieval(run);
  write_metrics_report((fs::path(manifest.out_dir) / "metrics.txt").string(), report);
  manifest.append_checksums({"metrics.txt"});
  for (const auto& [k, v] : report.rank_k) std::cout << "rank" << k << "," << v << "\n";
  std::cout << "mAP," << report.mean_ap << "\n";
  std::cout << "skipped," << report.skipped_queries << "\n";
  return 0;
}

int cmd_retrieve(const CommonOpts& common, const std::string& ckpt, const std::string& query_path,
                 const std::string& gallery_dir, int k) {
  Resolved r = resolve_all(common);
  RunManifest manifest = start_run("retrieve", common, r);
  Dataset data = load_dataset(gallery_dir);
  ModelConfig mc = config_for_checkpoint(common, ckpt);
  if (data.num_identities >= 2) mc.num_classes = data.num_identities;
  if (data.width > 0) mc.width = data.width;
  if (data.height > 0) mc.height = data.height;
  Model model(mc);
  ParamStore params = load_checkpoint_validated(ckpt, model.init(0));

  Tensor query_img = read_png_rgb(query_path);
  Tensor q = model.embed(params, query_img);
  const int qid = parse_identity_from_name(fs::path(query_path).filename().string());

  auto& gal = data.gallery.items;
  if (gal.empty()) throw DataError("gallery split is empty: " + gallery_dir);
  Tensor gallery_emb({static_cast<int>(gal.size()), q.size()});
  for (size_t i = 0; i < gal.size(); ++i) {
    decode_item(gal[i]);
    Tensor e = model.embed(params, gal[i].image);
    for (int j = 0; j < q.size(); ++j) gallery_emb.at(static_cast<int>(i), j) = e[j];
  }
  auto order = rank_gallery(q.data(), q.size(), gallery_emb, mc.distance);
  k = std::min<int>(k, static_cast<int>(order.size()));

  std::ofstream ranking(fs::path(manifest.out_dir) / "ranking.txt");
  ranking.precision(17);
  std::vector<Tensor> panels;
  std::vector<bool> match;
  for (int i = 0; i < k; ++i) {
    const auto& item = gal[static_cast<size_t>(order[static_cast<size_t>(i)])];
    double dist = 0.0;
    for (int j = 0; j < q.size(); ++j) {
      const double d = q[j] - gallery_emb.at(order[static_cast<size_t>(i)], j);
      dist += d * d;
    }
    const bool hit = qid >= 0 && item.identity == qid;
    ranking << item.file << " " << dist << " " << (hit ? 1 : 0) << "\n";
    panels.push_back(item.image);
    match.push_back(hit);
  }
  render_retrieval_grid((fs::path(manifest.out_dir) / "grid.png").string(), query_img, panels,
                        match);
  manifest.append_checksums({"ranking.txt", "grid.png"});
  std::cout << "top-" << k << " written to " << manifest.out_dir << "\n";
  return 0;
}

int cmd_ablate(const CommonOpts& common, const std::string& data_dir,
               const std::string& variants_csv, int seeds, bool sweep_tokenizers) {
  Resolved r = resolve_all(common);
  RunManifest manifest = start_run("ablate", common, r);
  write_effective_config(r, manifest.out_dir);
  Dataset data = load_dataset(data_dir);

  struct Row {
    std::string variant;
    uint64_t seed;
    MetricsReport report;
  };
  std::vector<Row> rows;

  std::vector<std::pair<std::string, std::pair<Variant, Tokenizer>>> runs;
  {
    std::istringstream is(variants_csv);
    std::string name;
    while (std::getline(is, name, ','))
      if (!name.empty()) runs.push_back({name, {variant_from_string(name), r.model.tokenizer}});
  }
  if (sweep_tokenizers)
    for (Tokenizer t : {Tokenizer::rawp, Tokenizer::cnn, Tokenizer::keypoint})
      runs.push_back({"tran_gcn_" + to_string(t), {Variant::tran_gcn, t}});

  for (const auto& [name, vt] : runs) {
    for (int s = 0; s < seeds; ++s) {
      const uint64_t seed = r.train.seed + static_cast<uint64_t>(s);
      ModelConfig mc = r.model;
      mc.variant = vt.first;
      mc.tokenizer = vt.second;
      if (data.num_identities >= 2) mc.num_classes = data.num_identities;
      if (data.width > 0) mc.width = data.width;
      if (data.height > 0) mc.height = data.height;
      TrainConfig tc = r.train;
      tc.seed = seed;
      Model model(mc);
      TrainResult result = train_stagewise(model, tc, data);
      RetrievalRun run = build_retrieval_run(model, result.params, data);
      rows.push_back({name, seed, evaluate_retrieval(run)});
      std::cout << name << " seed " << seed << ": rank1=" << rows.back().report.rank_k.at(1)
                << " mAP=" << rows.back().report.mean_ap << "\n";
    }
  }

  std::ofstream csv(fs::path(manifest.out_dir) / "ablation.csv");
  csv.precision(17);
  csv << "variant,seed,rank1,rank5,rank10,mAP\n";
  for (const auto& row : rows)
    csv << row.variant << "," << row.seed << "," << row.report.rank_k.at(1) << ","
        << row.report.rank_k.at(5) << "," << row.report.rank_k.at(10) << ","
        << row.report.mean_ap << "\n";
  csv.close();

  // chart: mean rank1/mAP per variant
  std::vector<std::string> groups;
  std::vector<std::vector<double>> values;
  for (const auto& [name, vt] : runs) {
    double r1 = 0.0, map = 0.0;
    int n = 0;
    for (const auto& row : rows)
      if (row.variant == name) {
        r1 += row.report.rank_k.at(1);
        map += row.report.mean_ap;
        ++n;
      }
    if (n == 0) continue;
    groups.push_back(name);
    values.push_back({r1 / n, map / n});
  }
  render_bar_chart((fs::path(manifest.out_dir) / "ablation.png").string(), groups,
                   {"rank1", "mAP"}, values);
  manifest.append_checksums({"config.txt", "ablation.csv", "ablation.png"});
  std::cout << "ablation table in " << manifest.out_dir << "/ablation.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"person re-identification experiments"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, eval_opts, retr_opts, abl_opts;
  std::string data_dir, ckpt, query_path, gallery_dir;
  std::string size_spec, variant_name, tokenizer_name;
  std::string variants_csv = "baseline,gcm,tran_gcn";
  int ids = 0, per_id = 0, topk = 5, seeds = 1;
  long long seed_flag = -1;
  bool twins = false, sweep_tokenizers = false;

  auto* gen = app.add_subcommand("generate", "render a synthetic identity dataset");
  add_common(gen, &gen_opts);
  gen->add_option("--ids", ids, "number of identities");
  gen->add_option("--per-id", per_id, "images per identity");
  gen->add_option("--size", size_spec, "image size WxH, both divisible by 32");
  gen->add_option("--seed", seed_flag, "rng seed");
  gen->add_flag("--twins", twins, "pair identities sharing colors, differing in build");

  auto* train = app.add_subcommand("train", "stagewise training on a dataset directory");
  add_common(train, &train_opts);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--variant", variant_name, "baseline | gcm | tran_gcn");
  train->add_option("--tokenizer", tokenizer_name, "rawp | cnn | keypoint");
  train->add_option("--seed", seed_flag, "rng seed");

  auto* eval = app.add_subcommand("eval", "retrieval metrics for a checkpoint");
  add_common(eval, &eval_opts);
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();

  auto* retr = app.add_subcommand("retrieve", "rank a gallery for one query image");
  add_common(retr, &retr_opts);
  retr->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  retr->add_option("--query", query_path, "query image (PNG)")->required();
  retr->add_option("--gallery", gallery_dir, "dataset directory providing the gallery")->required();
  retr->add_option("-k,--topk", topk, "results to keep");

  auto* abl = app.add_subcommand("ablate", "variant sweep with shared data and seeds");
  add_common(abl, &abl_opts);
  abl->add_option("--data", data_dir, "dataset directory")->required();
  abl->add_option("--variants", variants_csv, "comma list of variants");
  abl->add_option("--seeds", seeds, "seeds per variant");
  abl->add_option("--seed", seed_flag, "base rng seed");
  abl->add_flag("--sweep-tokenizers", sweep_tokenizers, "add rawp/cnn/keypoint rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      if (ids > 0) gen_opts.overrides["num_ids"] = std::to_string(ids);
      if (per_id > 0) gen_opts.overrides["imgs_per_id"] = std::to_string(per_id);
      if (!size_spec.empty()) {
        const auto x = size_spec.find('x');
        if (x == std::string::npos) throw ConfigError("--size expects WxH, got " + size_spec);
        gen_opts.overrides["width"] = size_spec.substr(0, x);
        gen_opts.overrides["height"] = size_spec.substr(x + 1);
      }
      if (seed_flag >= 0) gen_opts.overrides["seed"] = std::to_string(seed_flag);
      if (twins) gen_opts.overrides["twins"] = "true";
      return cmd_generate(gen_opts);
    }
    if (train->parsed()) {
      if (!variant_name.empty()) train_opts.overrides["variant"] = variant_name;
      if (!tokenizer_name.empty()) train_opts.overrides["tokenizer"] = tokenizer_name;
      if (seed_flag >= 0) train_opts.overrides["seed"] = std::to_string(seed_flag);
      return cmd_train(train_opts, data_dir);
    }
    if (eval->parsed()) return cmd_eval(eval_opts, ckpt, data_dir);
    if (retr->parsed()) return cmd_retrieve(retr_opts, ckpt, query_path, gallery_dir, topk);
    if (abl->parsed()) {
      if (seed_flag >= 0) abl_opts.overrides["seed"] = std::to_string(seed_flag);
      return cmd_ablate(abl_opts, data_dir, variants_csv, seeds, sweep_tokenizers);
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
