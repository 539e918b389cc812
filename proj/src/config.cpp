#include "reid/config.hpp"

#include <fstream>
#include <sstream>

#include "reid/params.hpp"

namespace reid {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::gcm: return "gcm";
    case Variant::tran_gcn: return "tran_gcn";
  }
  return "?";
}

std::string to_string(Tokenizer t) {
  switch (t) {
    case Tokenizer::rawp: return "rawp";
    case Tokenizer::cnn: return "cnn";
    case Tokenizer::keypoint: return "keypoint";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "gcm") return Variant::gcm;
  if (s == "tran_gcn") return Variant::tran_gcn;
  throw ConfigError("unknown variant '" + s + "' (expected one of {baseline,gcm,tran_gcn})");
}

Tokenizer tokenizer_from_string(const std::string& s) {
  if (s == "rawp") return Tokenizer::rawp;
  if (s == "cnn") return Tokenizer::cnn;
  if (s == "keypoint") return Tokenizer::keypoint;
  throw ConfigError("unknown tokenizer '" + s + "' (expected one of {rawp,cnn,keypoint})");
}

std::vector<std::pair<int, int>> coco18_limbs() {
  // neck-centric tree over the 18 keypoints plus the two ear-shoulder links
  return {{1, 2},  {1, 5},   {2, 3},   {3, 4},  {5, 6},   {6, 7},  {1, 8},
          {8, 9},  {9, 10},  {1, 11},  {11, 12}, {12, 13}, {1, 0},  {0, 14},
          {14, 15}, {0, 16}, {16, 17}, {2, 16}, {5, 17}};
}

void ModelConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("image dims must be positive");
  if (width % 32 || height % 32)
    throw ConfigError("image dims must be divisible by 32, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  if (keypoints <= 0) throw ConfigError("keypoints must be positive");
  if (pose_channels.size() != 5) throw ConfigError("pose_channels needs exactly 5 stages");
  for (int c : pose_channels)
    if (c <= 0) throw ConfigError("pose_channels entries must be positive");
  if (stage_channels.size() != 4) throw ConfigError("stage_channels needs exactly 4 stages");
  if (stage4_stride != 1 && stage4_stride != 2) throw ConfigError("stage4_stride must be 1 or 2");
  if (embed_dim <= 0 || heads <= 0 || depth <= 0) throw ConfigError("transformer dims must be positive");
  if (embed_dim % heads)
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads));
  if (window % 2 == 0) throw ConfigError("window must be odd, got " + std::to_string(window));
  if (node_conf_dims < 1) throw ConfigError("node_conf_dims must be >= 1");
  if (gcn_dims.empty()) throw ConfigError("need at least one gcn layer");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  for (auto [i, j] : limbs)
    if (i < 0 || i >= keypoints || j < 0 || j >= keypoints || i == j)
      throw ConfigError("limb pair out of range");
}

void TrainConfig::validate() const {
  if (pose_epochs < 0 || conv_epochs < 0 || trans_epochs < 0 || joint_epochs < 0)
    throw ConfigError("epoch counts must be >= 0");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
}

void GenConfig::validate() const {
  if (num_ids < 2) throw ConfigError("num_ids must be >= 2, got " + std::to_string(num_ids));
  if (imgs_per_id < 2) throw ConfigError("imgs_per_id must be >= 2");
  if (width % 32 || height % 32) throw ConfigError("image dims must be divisible by 32");
}

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string s) {
      const auto b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      const auto e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    kv.values_[trim(key)] = trim(val);
  }
  return kv;
}

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a bool: " + it->second);
}

std::string KvConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

uint64_t KvConfig::hash() const { return fnv1a64(resolved_text()); }

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void apply_config(const KvConfig& kv, ModelConfig* model, TrainConfig* train, GenConfig* gen) {
  static const char* known[] = {
      "width", "height", "keypoints", "stage4_stride", "embed_dim", "heads", "depth", "patch",
      "window", "tau_kp", "tokenizer", "node_conf_dims", "d_res", "d_trans", "final_dim",
      "aggregation", "num_classes", "contrastive_margin", "triplet_margin", "contrastive_form",
      "variant", "embedding", "distance", "input_mean", "input_std",
      "pose_epochs", "conv_epochs", "trans_epochs", "joint_epochs", "pose_lr", "conv_lr",
      "trans_lr", "joint_lr", "batch_size", "freeze_branches", "joint_aux_losses",
      "max_grad_norm", "seed", "checkpoint_every",
      "num_ids", "imgs_per_id", "occlusion_prob", "brightness_jitter", "pose_jitter",
      "translation", "twins"};
  for (const auto& [k, v] : kv.values()) {
    bool ok = false;
    for (const char* name : known)
      if (k == name) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown config key '" + k + "'");
  }

  if (model) {
    model->width = kv.get_int("width", model->width);
    model->height = kv.get_int("height", model->height);
    model->keypoints = kv.get_int("keypoints", model->keypoints);
    model->stage4_stride = kv.get_int("stage4_stride", model->stage4_stride);
    model->embed_dim = kv.get_int("embed_dim", model->embed_dim);
    model->heads = kv.get_int("heads", model->heads);
    model->depth = kv.get_int("depth", model->depth);
    model->patch = kv.get_int("patch", model->patch);
    model->window = kv.get_int("window", model->window);
    model->tau_kp = kv.get_double("tau_kp", model->tau_kp);
    if (kv.has("tokenizer")) model->tokenizer = tokenizer_from_string(kv.get("tokenizer", ""));
    model->node_conf_dims = kv.get_int("node_conf_dims", model->node_conf_dims);
    model->d_res = kv.get_int("d_res", model->d_res);
    model->d_trans = kv.get_int("d_trans", model->d_trans);
    model->final_dim = kv.get_int("final_dim", model->final_dim);
    if (kv.has("aggregation")) {
      const std::string a = kv.get("aggregation", "mean");
      if (a == "mean")
        model->aggregation = Aggregation::mean;
      else if (a == "max")
        model->aggregation = Aggregation::max;
      else
        throw ConfigError("unknown aggregation '" + a + "'");
    }
    model->num_classes = kv.get_int("num_classes", model->num_classes);
    model->contrastive_margin = kv.get_double("contrastive_margin", model->contrastive_margin);
    model->triplet_margin = kv.get_double("triplet_margin", model->triplet_margin);
    if (kv.has("contrastive_form")) {
      const std::string c = kv.get("contrastive_form", "hinge_positives");
      if (c == "hinge_positives")
        model->contrastive_form = ContrastiveForm::hinge_positives;
      else if (c == "hinge_negatives")
        model->contrastive_form = ContrastiveForm::hinge_negatives;
      else
        throw ConfigError("unknown contrastive_form '" + c + "'");
    }
    if (kv.has("variant")) model->variant = variant_from_string(kv.get("variant", ""));
    if (kv.has("embedding")) {
      const std::string e = kv.get("embedding", "fused");
      if (e == "fused")
        model->embedding = EmbeddingKind::fused;
      else if (e == "combined")
        model->embedding = EmbeddingKind::combined;
      else
        throw ConfigError("unknown embedding '" + e + "'");
    }
    if (kv.has("distance")) {
      const std::string d = kv.get("distance", "euclidean");
      if (d == "euclidean")
        model->distance = Distance::euclidean;
      else if (d == "cosine")
        model->distance = Distance::cosine;
      else
        throw ConfigError("unknown distance '" + d + "'");
    }
    model->input_mean = kv.get_double("input_mean", model->input_mean);
    model->input_std = kv.get_double("input_std", model->input_std);
  }
  if (train) {
    train->pose_epochs = kv.get_int("pose_epochs", train->pose_epochs);
    train->conv_epochs = kv.get_int("conv_epochs", train->conv_epochs);
    train->trans_epochs = kv.get_int("trans_epochs", train->trans_epochs);
    train->joint_epochs = kv.get_int("joint_epochs", train->joint_epochs);
    train->pose_lr = kv.get_double("pose_lr", train->pose_lr);
    train->conv_lr = kv.get_double("conv_lr", train->conv_lr);
    train->trans_lr = kv.get_double("trans_lr", train->trans_lr);
    train->joint_lr = kv.get_double("joint_lr", train->joint_lr);
    train->batch_size = kv.get_int("batch_size", train->batch_size);
    train->freeze_branches = kv.get_bool("freeze_branches", train->freeze_branches);
    train->joint_aux_losses = kv.get_bool("joint_aux_losses", train->joint_aux_losses);
    train->max_grad_norm = kv.get_double("max_grad_norm", train->max_grad_norm);
    train->seed = kv.get_u64("seed", train->seed);
    train->checkpoint_every = kv.get_int("checkpoint_every", train->checkpoint_every);
  }
  if (gen) {
    gen->num_ids = kv.get_int("num_ids", gen->num_ids);
    gen->imgs_per_id = kv.get_int("imgs_per_id", gen->imgs_per_id);
    gen->width = kv.get_int("width", gen->width);
    gen->height = kv.get_int("height", gen->height);
    gen->seed = kv.get_u64("seed", gen->seed);
    gen->occlusion_prob = kv.get_double("occlusion_prob", gen->occlusion_prob);
    gen->brightness_jitter = kv.get_double("brightness_jitter", gen->brightness_jitter);
    gen->pose_jitter = kv.get_double("pose_jitter", gen->pose_jitter);
    gen->translation = kv.get_int("translation", gen->translation);
    gen->twins = kv.get_bool("twins", gen->twins);
  }
}

KvConfig dump_config(const ModelConfig& model, const TrainConfig& train, const GenConfig& gen) {
  KvConfig kv;
  kv.set("width", std::to_string(model.width));
  kv.set("height", std::to_string(model.height));
  kv.set("keypoints", std::to_string(model.keypoints));
  kv.set("stage4_stride", std::to_string(model.stage4_stride));
  kv.set("embed_dim", std::to_string(model.embed_dim));
  kv.set("heads", std::to_string(model.heads));
  kv.set("depth", std::to_string(model.depth));
  kv.set("patch", std::to_string(model.patch));
  kv.set("window", std::to_string(model.window));
  kv.set("tau_kp", fmt_double(model.tau_kp));
  kv.set("tokenizer", to_string(model.tokenizer));
  kv.set("node_conf_dims", std::to_string(model.node_conf_dims));
  kv.set("d_res", std::to_string(model.d_res));
  kv.set("d_trans", std::to_string(model.d_trans));
  kv.set("final_dim", std::to_string(model.final_dim));
  kv.set("aggregation", model.aggregation == Aggregation::mean ? "mean" : "max");
  kv.set("num_classes", std::to_string(model.num_classes));
  kv.set("contrastive_margin", fmt_double(model.contrastive_margin));
  kv.set("triplet_margin", fmt_double(model.triplet_margin));
  kv.set("contrastive_form",
         model.contrastive_form == ContrastiveForm::hinge_positives ? "hinge_positives" : "hinge_negatives");
  kv.set("variant", to_string(model.variant));
  kv.set("embedding", model.embedding == EmbeddingKind::fused ? "fused" : "combined");
  kv.set("distance", model.distance == Distance::euclidean ? "euclidean" : "cosine");
  kv.set("input_mean", fmt_double(model.input_mean));
  kv.set("input_std", fmt_double(model.input_std));

  kv.set("pose_epochs", std::to_string(train.pose_epochs));
  kv.set("conv_epochs", std::to_string(train.conv_epochs));
  kv.set("trans_epochs", std::to_string(train.trans_epochs));
  kv.set("joint_epochs", std::to_string(train.joint_epochs));
  kv.set("pose_lr", fmt_double(train.pose_lr));
  kv.set("conv_lr", fmt_double(train.conv_lr));
  kv.set("trans_lr", fmt_double(train.trans_lr));
  kv.set("joint_lr", fmt_double(train.joint_lr));
  kv.set("batch_size", std::to_string(train.batch_size));
  kv.set("freeze_branches", train.freeze_branches ? "true" : "false");
  kv.set("joint_aux_losses", train.joint_aux_losses ? "true" : "false");
  kv.set("max_grad_norm", fmt_double(train.max_grad_norm));
  kv.set("seed", std::to_string(train.seed));
  kv.set("checkpoint_every", std::to_string(train.checkpoint_every));

  kv.set("num_ids", std::to_string(gen.num_ids));
  kv.set("imgs_per_id", std::to_string(gen.imgs_per_id));
  kv.set("occlusion_prob", fmt_double(gen.occlusion_prob));
  kv.set("brightness_jitter", fmt_double(gen.brightness_jitter));
  kv.set("pose_jitter", fmt_double(gen.pose_jitter));
  kv.set("translation", std::to_string(gen.translation));
  kv.set("twins", gen.twins ? "true" : "false");
  return kv;
}

}  // namespace reid
