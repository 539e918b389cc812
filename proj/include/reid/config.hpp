#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reid/errors.hpp"

namespace reid {

enum class Variant { baseline, gcm, tran_gcn };
enum class Tokenizer { rawp, cnn, keypoint };
enum class Aggregation { mean, max };
enum class ContrastiveForm { hinge_positives, hinge_negatives };
enum class Distance { euclidean, cosine };
enum class EmbeddingKind { fused, combined };

std::string to_string(Variant v);
std::string to_string(Tokenizer t);
Variant variant_from_string(const std::string& s);
Tokenizer tokenizer_from_string(const std::string& s);

// OpenPose-style 18-keypoint limb list (19 pairs).
std::vector<std::pair<int, int>> coco18_limbs();

struct ModelConfig {
  int width = 64;   // W, first spatial dim
  int height = 32;  // H, second spatial dim

  // pose branch
  int keypoints = 18;                                 // K
  std::vector<int> pose_channels = {8, 16, 24, 32, 64};  // five stride-2 stages; last = C_pe
  int pose_head_hidden = 32;

  // conv branch
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32, 64, 128};
  int stage4_stride = 1;

  // transformer branch
  int embed_dim = 64;  // D
  int heads = 4;
  int depth = 2;  // T encoder blocks
  int patch = 16;
  int window = 3;
  double tau_kp = 0.1;
  Tokenizer tokenizer = Tokenizer::keypoint;

  // gcm
  int node_conf_dims = 1;  // j
  int d_res = 32;
  int d_trans = 32;
  std::vector<int> gcn_dims = {64, 64};
  int final_dim = 64;  // D_final
  Aggregation aggregation = Aggregation::mean;

  // heads / losses
  int num_classes = 8;
  double contrastive_margin = 1.0;
  double triplet_margin = 0.5;
  ContrastiveForm contrastive_form = ContrastiveForm::hinge_positives;

  Variant variant = Variant::tran_gcn;
  EmbeddingKind embedding = EmbeddingKind::fused;
  Distance distance = Distance::euclidean;

  // input normalization applied inside the branches
  double input_mean = 0.5;
  double input_std = 0.25;

  std::vector<std::pair<int, int>> limbs = coco18_limbs();

  int grid_w() const { return width / 32; }
  int grid_h() const { return height / 32; }
  int n_limbs() const { return static_cast<int>(limbs.size()); }
  void validate() const;
};

struct TrainConfig {
  int pose_epochs = 20;
  int conv_epochs = 40;
  int trans_epochs = 10;
  int joint_epochs = 400;
  double pose_lr = 0.05;
  double conv_lr = 0.2;
  double trans_lr = 0.1;
  double joint_lr = 0.05;
  int batch_size = 8;
  bool freeze_branches = true;   // stage 4 default
  bool joint_aux_losses = false; // add a triplet term on the embedding in stage 4
  double max_grad_norm = 5.0;    // per-batch global-norm clip; 0 disables
  uint64_t seed = 1;
  int checkpoint_every = 0;  // epochs; 0 = only final
  void validate() const;
};

struct GenConfig {
  int num_ids = 8;
  int imgs_per_id = 16;
  int width = 64;
  int height = 32;
  uint64_t seed = 3;
  double occlusion_prob = 0.0;
  double brightness_jitter = 0.15;
  double pose_jitter = 1.0;   // per-joint pixel jitter scale
  int translation = 2;        // max +/- whole-image shift in pixels
  bool twins = false;         // pair identities sharing colors, differing in build
  void validate() const;
};

// Flat key=value config file; '#' comments; unknown keys rejected.
// CLI flags override file values.
class KvConfig {
 public:
  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Canonical serialized form (sorted keys), and its FNV-1a hash.
  std::string resolved_text() const;
  uint64_t hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Applies recognized keys onto the config structs; throws ConfigError on
// unknown keys so typos do not pass silently.
void apply_config(const KvConfig& kv, ModelConfig* model, TrainConfig* train, GenConfig* gen);
// Dumps every effective key of the three structs into a KvConfig.
KvConfig dump_config(const ModelConfig& model, const TrainConfig& train, const GenConfig& gen);

}  // namespace reid
