#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbmt/image.hpp"

namespace cbmt {

enum class Split { train, test };

struct ManifestEntry {
  std::string id;
  std::string image_path;  // relative to root
  std::string mask_path;   // empty = unlabeled
};

struct DatasetManifest {
  std::string root;
  Split split = Split::train;
  std::string domain_tag;
  std::vector<ManifestEntry> entries;
  std::pair<int, int> roi_size = {512, 512};
};

// Manifest file: one "id,image_path[,mask_path]" line per entry. Paths are
// resolved against the manifest's directory. Verifies referenced files exist
// and ids are unique.
DatasetManifest read_manifest(const std::string& path, Split split, const std::string& domain_tag,
                              std::pair<int, int> roi_size);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Decodes one entry: image to [0,1] floats, mask to binary channels
// (0 = disc union region, 1 = cup), both fitted to roi_size (center-crop when
// larger, bilinear/nearest resize otherwise).
ImageSample load_sample(const DatasetManifest& manifest, size_t index, int num_classes);
std::vector<ImageSample> load_dataset(const DatasetManifest& manifest, int num_classes);

// Mean pixel intensity across a dataset (used as the erase fill value).
float mean_intensity(const std::vector<ImageSample>& samples);

// Photometric shift between the synthetic source and target domains.
struct DomainShift {
  double contrast_scale = 1.0;
  double brightness_shift = 0.0;
  double blur_sigma = 0.0;
  uint64_t texture_seed = 0;  // nonzero: different background texture family

  bool operator==(const DomainShift&) const = default;
};

struct SynthSpec {
  int n_images = 64;  // train images per domain
  int n_test = 32;    // test images per domain
  std::pair<int, int> image_size = {128, 128};
  std::pair<double, double> disc_radius_range = {0.13, 0.20};  // fraction of min side
  std::pair<double, double> cup_ratio_range = {0.42, 0.55};    // cup axis / disc axis
  DomainShift domain_shift;
  uint64_t seed = 0;
};

struct SynthDatasets {
  DatasetManifest source_train, source_test;
  DatasetManifest target_train;  // unlabeled
  DatasetManifest target_test;
  DatasetManifest target_train_labeled;  // same images, masks attached (analysis only)
};

// Renders textured-background disc/cup scenes with exact masks under
// out_dir/{source,target}/{train,test}; the target applies the photometric
// domain shift to the same underlying scenes. Cup foreground lands around
// 1-3% of pixels. Deterministic in spec.seed.
SynthDatasets generate_synthetic(const SynthSpec& spec, const std::string& out_dir);

}  // namespace cbmt
