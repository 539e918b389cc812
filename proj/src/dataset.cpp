#include "reid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "reid/checkpoint.hpp"
#include "reid/params.hpp"
#include "reid/png_io.hpp"

namespace fs = std::filesystem;

namespace reid {

namespace {

// ---------------- market-format ingestion ----------------

const std::regex kNameRe(R"(^(-?\d+)_c(\d+))");

bool parse_market_name(const std::string& name, int* id, int* cam) {
  std::smatch m;
  if (!std::regex_search(name, m, kNameRe)) return false;
  *id = std::stoi(m[1].str());
  *cam = std::stoi(m[2].str());
  return true;
}

bool is_image_name(const std::string& name) {
  auto ends_with = [&](const char* ext) {
    const size_t n = std::strlen(ext);
    return name.size() > n &&
           std::equal(name.end() - static_cast<long>(n), name.end(), ext,
                      [](char a, char b) { return std::tolower(a) == b; });
  };
  return ends_with(".png") || ends_with(".jpg") || ends_with(".jpeg");
}

struct RawEntry {
  std::string path;
  std::string name;
  int id = 0;
  int cam = 1;
};

std::vector<RawEntry> scan_market_subdir(const fs::path& dir, int* skipped) {
  std::vector<RawEntry> out;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    if (!is_image_name(name)) {
      ++*skipped;
      continue;
    }
    RawEntry r;
    if (!parse_market_name(name, &r.id, &r.cam)) {
      std::fprintf(stderr, "warning: skipping unparsable filename %s\n", name.c_str());
      ++*skipped;
      continue;
    }
    r.path = (dir / name).string();
    r.name = name;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------- synthetic person model ----------------

// joint order: nose, neck, r/l shoulder-elbow-wrist, r/l hip-knee-ankle,
// r/l eye, r/l ear (18 joints)
struct JointTemplate {
  double v;  // 0 = top of figure, 1 = bottom
  double u;  // shoulder units, negative = right side
};

constexpr JointTemplate kJoints[18] = {
    {0.06, 0.0},    // nose
    {0.16, 0.0},    // neck
    {0.20, -1.0},   // r shoulder
    {0.38, -1.25},  // r elbow
    {0.58, -1.35},  // r wrist
    {0.20, 1.0},    // l shoulder
    {0.38, 1.25},   // l elbow
    {0.58, 1.35},   // l wrist
    {0.52, -0.55},  // r hip
    {0.72, -0.60},  // r knee
    {0.93, -0.62},  // r ankle
    {0.52, 0.55},   // l hip
    {0.72, 0.60},   // l knee
    {0.93, 0.62},   // l ankle
    {0.045, -0.18}, // r eye
    {0.045, 0.18},  // l eye
    {0.06, -0.38},  // r ear
    {0.06, 0.38},   // l ear
};

struct IdentityParams {
  double scale = 0.9;
  double shoulder_w = 1.0;
  double hip_w = 1.0;
  double leg_len = 1.0;
  double torso_len = 1.0;
  double arm_raise = 0.0;  // 0 = arms hanging, 1 = arms overhead
  double colors[19][3];    // per limb
  int torso_texture = 0;
  double torso_color[3];
};

IdentityParams make_identity(uint64_t dataset_seed, int id, bool twins) {
  // twins share appearance and build but hold their arms differently, so
  // pooled color statistics collide while keypoint geometry separates them
  const int shared_key = twins ? id / 2 : id;
  Rng app(mix_seed(dataset_seed, "appearance" + std::to_string(shared_key)));
  IdentityParams p;
  for (auto& c : p.colors) {
    // bright-ish distinct colors
    c[0] = 0.25 + 0.75 * app.uniform();
    c[1] = 0.25 + 0.75 * app.uniform();
    c[2] = 0.25 + 0.75 * app.uniform();
  }
  p.torso_texture = app.uniform_int(3);
  p.torso_color[0] = 0.25 + 0.75 * app.uniform();
  p.torso_color[1] = 0.25 + 0.75 * app.uniform();
  p.torso_color[2] = 0.25 + 0.75 * app.uniform();

  Rng build(mix_seed(dataset_seed, "build" + std::to_string(shared_key)));
  p.scale = build.uniform(0.82, 0.95);
  p.shoulder_w = build.uniform(0.85, 1.15);
  p.hip_w = build.uniform(0.85, 1.15);
  p.leg_len = build.uniform(0.9, 1.1);
  p.torso_len = build.uniform(0.9, 1.1);

  Rng pose_rng(mix_seed(dataset_seed, "stance" + std::to_string(id)));
  if (twins)
    p.arm_raise = (id % 2 == 0) ? pose_rng.uniform(0.0, 0.1) : pose_rng.uniform(0.9, 1.0);
  else
    p.arm_raise = pose_rng.uniform(0.0, 0.35);
  return p;
}

struct RenderedPerson {
  Tensor image;
  std::vector<std::pair<double, double>> joints_px;  // (x, y) pixel coords
  std::vector<bool> limb_occluded;
};

void fill_disc(Tensor& img, double cx, double cy, double r, const double color[3],
               double brightness) {
  const int w = img.dim(0), h = img.dim(1);
  const int x0 = std::max(0, static_cast<int>(cx - r)), x1 = std::min(w - 1, static_cast<int>(cx + r) + 1);
  const int y0 = std::max(0, static_cast<int>(cy - r)), y1 = std::min(h - 1, static_cast<int>(cy + r) + 1);
  for (int x = x0; x <= x1; ++x)
    for (int y = y0; y <= y1; ++y) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(color[c] * brightness, 0.0, 1.0);
    }
}

void draw_segment(Tensor& img, double ax, double ay, double bx, double by, double r,
                  const double color[3], double brightness) {
  const double len = std::hypot(bx - ax, by - ay);
  const int steps = std::max(2, static_cast<int>(len * 2.0));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    fill_disc(img, ax + t * (bx - ax), ay + t * (by - ay), r, color, brightness);
  }
}

RenderedPerson render_person(const GenConfig& cfg, const IdentityParams& idp, uint64_t img_seed) {
  Rng rng(img_seed);
  const int w = cfg.width, h = cfg.height;
  RenderedPerson out;
  out.image = Tensor({w, h, 3});
  // gray noise background
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      const double v = 0.08 + 0.14 * rng.uniform();
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = v;
    }

  const double brightness = 1.0 + cfg.brightness_jitter * rng.uniform(-1.0, 1.0);
  const double tx = cfg.translation > 0 ? rng.uniform(-cfg.translation, cfg.translation) : 0.0;
  const double ty = cfg.translation > 0 ? rng.uniform(-cfg.translation, cfg.translation) : 0.0;
  const double arm_swing = rng.uniform(-0.15, 0.15);
  const double leg_swing = rng.uniform(-0.06, 0.06);

  out.joints_px.resize(18);
  for (int j = 0; j < 18; ++j) {
    JointTemplate t = kJoints[j];
    // identity build modifiers
    if (j >= 2 && j <= 7) t.u *= idp.shoulder_w;                       // arms
    if (j >= 8 && j <= 13) t.u *= idp.hip_w;                           // legs
    if (j >= 9 && j <= 10) t.v = 0.52 + (t.v - 0.52) * idp.leg_len;    // r knee/ankle
    if (j >= 12 && j <= 13) t.v = 0.52 + (t.v - 0.52) * idp.leg_len;   // l knee/ankle
    if (j >= 8 && j <= 13) t.v = 0.16 + (t.v - 0.16) * idp.torso_len;  // below neck
    // arm stance: elbows and wrists travel from hanging toward overhead
    if (j == 3 || j == 6) t.v -= idp.arm_raise * (t.v - 0.10);
    if (j == 4 || j == 7) t.v -= idp.arm_raise * (t.v - 0.02);
    if (j >= 3 && j <= 7 && j != 5) t.u *= 1.0 - 0.4 * idp.arm_raise;
    // per-image swing
    if (j == 3 || j == 4) t.u -= arm_swing;
    if (j == 6 || j == 7) t.u += arm_swing;
    if (j == 10) t.u -= leg_swing;
    if (j == 13) t.u += leg_swing;

    double px = (0.5 + (t.v - 0.5) * 0.92 * idp.scale) * w + tx;
    double py = (0.5 + t.u * 0.30 * idp.scale) * h + ty;
    if (cfg.pose_jitter > 0.0) {
      px += rng.normal() * cfg.pose_jitter * 0.5;
      py += rng.normal() * cfg.pose_jitter * 0.5;
    }
    out.joints_px[static_cast<size_t>(j)] = {px, py};
  }

  // torso quad between shoulders and hips, textured
  {
    const auto [rsx, rsy] = out.joints_px[2];
    const auto [lsx, lsy] = out.joints_px[5];
    const auto [rhx, rhy] = out.joints_px[8];
    const auto [lhx, lhy] = out.joints_px[11];
    const int x0 = std::max(0, static_cast<int>(std::min(rsx, lsx)));
    const int x1 = std::min(w - 1, static_cast<int>(std::max(rhx, lhx)));
    const int y0 = std::max(0, static_cast<int>(std::min({rsy, rhy})));
    const int y1 = std::min(h - 1, static_cast<int>(std::max({lsy, lhy})));
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y) {
        double mod = 1.0;
        if (idp.torso_texture == 1) mod = (x / 3) % 2 ? 1.0 : 0.55;             // stripes
        if (idp.torso_texture == 2) mod = ((x / 3) + (y / 3)) % 2 ? 1.0 : 0.55;  // checker
        for (int c = 0; c < 3; ++c)
          out.image.at(x, y, c) = std::clamp(idp.torso_color[c] * mod * brightness, 0.0, 1.0);
      }
  }

  const double limb_r = std::max(1.2, w / 40.0);
  const auto& limbs = coco18_limbs();
  for (size_t l = 0; l < limbs.size(); ++l) {
    const auto [i, j] = limbs[l];
    const auto [ax, ay] = out.joints_px[static_cast<size_t>(i)];
    const auto [bx, by] = out.joints_px[static_cast<size_t>(j)];
    draw_segment(out.image, ax, ay, bx, by, limb_r, idp.colors[l], brightness);
  }
  // head
  {
    const auto [nx, ny] = out.joints_px[0];
    const double head_color[3] = {0.9, 0.75, 0.6};
    fill_disc(out.image, nx, ny, limb_r * 1.8, head_color, brightness);
  }

  out.limb_occluded.assign(limbs.size(), false);
  if (cfg.occlusion_prob > 0.0 && rng.uniform() < cfg.occlusion_prob) {
    const double ow = rng.uniform(0.2, 0.4) * w, oh = rng.uniform(0.25, 0.5) * h;
    const double ox = rng.uniform(0.0, w - ow), oy = rng.uniform(0.0, h - oh);
    for (int x = static_cast<int>(ox); x < static_cast<int>(ox + ow); ++x)
      for (int y = static_cast<int>(oy); y < static_cast<int>(oy + oh); ++y)
        if (x >= 0 && x < w && y >= 0 && y < h)
          for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = 0.5;
    for (size_t l = 0; l < limbs.size(); ++l) {
      const auto [i, j] = limbs[l];
      const double mx = (out.joints_px[static_cast<size_t>(i)].first +
                         out.joints_px[static_cast<size_t>(j)].first) / 2.0;
      const double my = (out.joints_px[static_cast<size_t>(i)].second +
                         out.joints_px[static_cast<size_t>(j)].second) / 2.0;
      if (mx >= ox && mx < ox + ow && my >= oy && my < oy + oh)
        out.limb_occluded[l] = true;
    }
  }
  return out;
}

PoseTargets make_targets(const GenConfig& cfg, const RenderedPerson& person) {
  const int gw = cfg.width / 32, gh = cfg.height / 32;
  PoseTargets t;
  t.gt_S = Tensor({gw, gh, 18});
  for (int j = 0; j < 18; ++j) {
    const int cx = std::clamp(static_cast<int>(person.joints_px[static_cast<size_t>(j)].first) / 32,
                              0, gw - 1);
    const int cy = std::clamp(
        static_cast<int>(person.joints_px[static_cast<size_t>(j)].second) / 32, 0, gh - 1);
    for (int x = 0; x < gw; ++x)
      for (int y = 0; y < gh; ++y) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        t.gt_S.at(x, y, j) = std::exp(-d2 / 2.0);  // sigma = 1 cell, peak at joint cell
      }
  }
  const int nl = static_cast<int>(coco18_limbs().size());
  t.gt_pafs = Tensor({nl});
  for (int l = 0; l < nl; ++l)
    t.gt_pafs[l] = person.limb_occluded[static_cast<size_t>(l)] ? 0.0 : 1.0;
  return t;
}

std::string item_name(int id, int idx, int cam) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "img_%03d_%03d_c%d.png", id, idx, cam);
  return buf;
}

}  // namespace

Dataset load_market_dir(const std::string& root) {
  const fs::path base(root);
  for (const char* sub : {"bounding_box_train", "query", "bounding_box_test"})
    if (!fs::is_directory(base / sub))
      throw DataError("market root is missing subdirectory '" + std::string(sub) + "': " + root);

  Dataset data;
  data.train.role = DatasetSplit::Role::train;
  data.query.role = DatasetSplit::Role::query;
  data.gallery.role = DatasetSplit::Role::gallery;

  auto ingest = [&](const char* sub, DatasetSplit* split) {
    int skipped = 0;
    auto entries = scan_market_subdir(base / sub, &skipped);
    split->skipped_files = skipped;
    if (entries.empty() && skipped == 0)
      throw DataError("market subdirectory is empty: " + (base / sub).string());
    for (auto& e : entries) {
      DatasetItem item;
      item.file = e.path;
      item.identity = e.id;
      item.camera = e.cam;
      if (e.id <= 0)  // junk (-1) and distractors (0) are gallery-only extras
        data.gallery.distractors.push_back(std::move(item));
      else
        split->items.push_back(std::move(item));
    }
  };
  ingest("bounding_box_train", &data.train);
  ingest("query", &data.query);
  ingest("bounding_box_test", &data.gallery);

  // contiguous training labels
  std::set<int> ids;
  for (const auto& it : data.train.items) ids.insert(it.identity);
  std::map<int, int> remap;
  int next = 0;
  for (int id : ids) remap[id] = next++;
  for (auto& it : data.train.items) it.identity = remap[it.identity];
  data.train.num_identities = next;
  data.num_identities = next;
  return data;
}

void decode_item(DatasetItem& item) {
  if (!item.image.empty()) return;
  if (item.file.empty()) throw DataError("item has no file to decode");
  const std::string lower = [&] {
    std::string s = item.file;
    std::transform(s.begin(), s.end(), s.begin(), ::tolower);
    return s;
  }();
  if (lower.size() < 4 || lower.substr(lower.size() - 4) != ".png")
    throw DataError("only PNG decoding is supported, got: " + item.file);
  item.image = read_png_rgb(item.file);
}

Dataset generate_synthetic(const GenConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.width = cfg.width;
  data.height = cfg.height;
  data.num_identities = cfg.num_ids;
  data.train.role = DatasetSplit::Role::train;
  data.query.role = DatasetSplit::Role::query;
  data.gallery.role = DatasetSplit::Role::gallery;
  data.train.num_identities = cfg.num_ids;

  for (int id = 0; id < cfg.num_ids; ++id) {
    const IdentityParams idp = make_identity(cfg.seed, id, cfg.twins);
    for (int idx = 0; idx < cfg.imgs_per_id; ++idx) {
      const uint64_t img_seed =
          mix_seed(cfg.seed, "img" + std::to_string(id) + "_" + std::to_string(idx));
      RenderedPerson person = render_person(cfg, idp, img_seed);
      DatasetItem item;
      item.identity = id;
      item.camera = (idx % 2) + 1;
      item.file = item_name(id, idx, item.camera);
      item.targets = make_targets(cfg, person);
      item.image = std::move(person.image);
      if (idx < cfg.imgs_per_id / 2)
        data.train.items.push_back(std::move(item));
      else if (idx == cfg.imgs_per_id / 2)
        data.query.items.push_back(std::move(item));
      else
        data.gallery.items.push_back(std::move(item));
    }
  }
  return data;
}

void export_dataset(const Dataset& data, const std::string& dir) {
  fs::create_directories(dir);
  KvConfig meta;
  meta.set("width", std::to_string(data.width));
  meta.set("height", std::to_string(data.height));
  meta.set("num_identities", std::to_string(data.num_identities));
  {
    std::ofstream f(fs::path(dir) / "dataset.txt");
    if (!f) throw DataError("cannot write dataset metadata in " + dir);
    f << meta.resolved_text();
  }
  auto dump_split = [&](const DatasetSplit& split, const char* name) {
    const fs::path sdir = fs::path(dir) / name;
    fs::create_directories(sdir);
    std::ofstream manifest(sdir / "manifest.txt");
    if (!manifest) throw DataError("cannot write manifest in " + sdir.string());
    std::map<std::string, Tensor> targets;
    for (const auto& item : split.items) {
      manifest << item.file << "," << item.identity << "," << item.camera << "\n";
      write_png_rgb((sdir / item.file).string(), item.image);
      if (!item.targets.gt_S.empty()) {
        targets.emplace(item.file + ".S", item.targets.gt_S);
        targets.emplace(item.file + ".paf", item.targets.gt_pafs);
      }
    }
    if (!targets.empty())
      save_tensor_archive((sdir / "pose_targets.bin").string(), targets, 0);
  };
  dump_split(data.train, "train");
  dump_split(data.query, "query");
  dump_split(data.gallery, "gallery");
}

Dataset load_synthetic_dir(const std::string& dir) {
  const fs::path base(dir);
  if (!fs::exists(base / "dataset.txt")) throw DataError("not a dataset directory: " + dir);
  KvConfig meta = KvConfig::from_file((base / "dataset.txt").string());
  Dataset data;
  data.width = meta.get_int("width", 0);
  data.height = meta.get_int("height", 0);
  data.num_identities = meta.get_int("num_identities", 0);
  data.train.role = DatasetSplit::Role::train;
  data.query.role = DatasetSplit::Role::query;
  data.gallery.role = DatasetSplit::Role::gallery;
  data.train.num_identities = data.num_identities;

  auto load_split = [&](DatasetSplit* split, const char* name) {
    const fs::path sdir = base / name;
    std::ifstream manifest(sdir / "manifest.txt");
    if (!manifest) throw DataError("missing manifest in " + sdir.string());
    std::map<std::string, Tensor> targets;
    if (fs::exists(sdir / "pose_targets.bin"))
      targets = load_tensor_archive((sdir / "pose_targets.bin").string(), nullptr);
    std::string line;
    std::set<std::string> seen;
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      std::string file, id_s, cam_s;
      if (!std::getline(is, file, ',') || !std::getline(is, id_s, ',') ||
          !std::getline(is, cam_s))
        throw DataError("bad manifest line in " + sdir.string() + ": " + line);
      if (!seen.insert(file).second)
        throw DataError("duplicate item in manifest: " + file);
      DatasetItem item;
      item.file = file;
      item.identity = std::stoi(id_s);
      item.camera = std::stoi(cam_s);
      item.image = read_png_rgb((sdir / file).string());
      auto s_it = targets.find(file + ".S");
      auto p_it = targets.find(file + ".paf");
      if (s_it != targets.end() && p_it != targets.end()) {
        item.targets.gt_S = s_it->second;
        item.targets.gt_pafs = p_it->second;
      }
      split->items.push_back(std::move(item));
    }
  };
  load_split(&data.train, "train");
  load_split(&data.query, "query");
  load_split(&data.gallery, "gallery");
  return data;
}

bool is_synthetic_dir(const std::string& dir) {
  return fs::exists(fs::path(dir) / "dataset.txt");
}

Dataset load_dataset(const std::string& dir) {
  if (is_synthetic_dir(dir)) return load_synthetic_dir(dir);
  return load_market_dir(dir);
}

}  // namespace reid
