#pragma once

#include <string>
#include <vector>

#include "reid/config.hpp"
#include "reid/losses.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct DatasetItem {
  std::string file;  // on-disk name; empty for purely in-memory items
  Tensor image;      // [W,H,3] in [0,1]; may be empty until decoded
  int identity = 0;
  int camera = 1;
  PoseTargets targets;  // filled for generated training data
};

struct DatasetSplit {
  enum class Role { train, query, gallery };
  Role role = Role::train;
  std::vector<DatasetItem> items;
  int num_identities = 0;  // contiguous label count (train split)
  int skipped_files = 0;   // unparsable filenames
  // Junk (-1) and distractor (0) entries; usable in gallery context only.
  std::vector<DatasetItem> distractors;
};

struct Dataset {
  DatasetSplit train, query, gallery;
  int width = 0, height = 0;
  int num_identities = 0;
};

// Market-format directory: bounding_box_train/, query/, bounding_box_test/.
// Filenames follow ^(-?\d+)_c(\d+); junk/distractor ids (-1, 0) are routed to
// the gallery's distractor list. Train identities are remapped to a
// contiguous [0, n) range; query/gallery keep raw ids. Images stay
// undecoded (decode_item handles PNG on demand).
Dataset load_market_dir(const std::string& root);

// Decodes an item's image in place when it was loaded lazily (PNG only).
void decode_item(DatasetItem& item);

// Renders seeded stick-figure identities with per-image nuisances and exact
// pose targets. Splits per identity: first half train, one query, rest
// gallery, cameras alternating 1/2.
Dataset generate_synthetic(const GenConfig& cfg);

// One directory per split with PNG images and a "filename,identity,camera"
// manifest; train pose targets go to a tensor archive next to the images.
void export_dataset(const Dataset& data, const std::string& dir);
Dataset load_synthetic_dir(const std::string& dir);

// True when dir looks like an exported synthetic dataset.
bool is_synthetic_dir(const std::string& dir);
// Loads either layout.
Dataset load_dataset(const std::string& dir);

}  // namespace reid
