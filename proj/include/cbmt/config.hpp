#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cbmt {

// Pixel filter used when accumulating loss statistics. The printed selection
// formula and the surrounding prose disagree; both readings are available.
enum class FilterMode {
  distance_from_label,   // keep iff |p - yhat| / |gamma - yhat| > alpha (default)
  literal_paper_formula  // keep iff |p - gamma| / |yhat - gamma| > alpha
};

enum class EvalModel { teacher, student, both };

std::string to_string(FilterMode m);
FilterMode filter_mode_from_string(const std::string& s);
std::string to_string(EvalModel m);
EvalModel eval_model_from_string(const std::string& s);

struct AugmentConfig {
  double flip_prob = 0.5;   // horizontal and vertical, each
  double scale_min = 0.9;
  double scale_max = 1.1;
  double op_prob = 0.8;     // independent gate per strong op
  bool erase = true;
  double erase_min_frac = 0.02;
  double erase_max_frac = 0.10;
  bool contrast = true;
  double contrast_min = 0.5;
  double contrast_max = 1.5;
  bool noise = true;
  double noise_min_frac = 0.01;
  double noise_max_frac = 0.05;
  bool loss_on_erased = true;  // erased regions stay in the loss

  bool operator==(const AugmentConfig&) const = default;
};

struct ModelConfig {
  std::string arch = "tiny_unet";  // or "pixel_affine"
  int num_classes = 2;             // 0 = optic disc, 1 = optic cup
  bool ema_include_buffers = true; // EMA also covers normalization statistics
  EvalModel eval_model = EvalModel::teacher;
  double eval_threshold = 0.5;
  double bn_momentum = 0.1;

  bool operator==(const ModelConfig&) const = default;
};

struct EngineConfig {
  bool weak_aug = true;
  bool calib_streaming = false;     // apply running eta estimates immediately
  bool debug_prediction_bank = false;
  double vanilla_lr_scale = 0.05;   // 1/20, used by the ablation P-L row
  int eval_every = 1;
  int checkpoint_every = 0;         // 0 = final checkpoint only

  bool operator==(const EngineConfig&) const = default;
};

struct CbmtConfig {
  double gamma = 0.75;
  double lambda_ema = 0.98;
  double alpha = 0.2;
  std::set<int> calibrated_classes = {1};  // class cup
  double lr_adapt = 5e-4;
  double lr_source = 1e-3;
  double lr_source_decay = 0.98;  // per epoch
  int epochs_adapt = 20;
  int epochs_source = 200;
  int batch_size = 8;
  std::pair<double, double> optimizer_momenta = {0.9, 0.99};
  FilterMode filter_mode = FilterMode::distance_from_label;
  uint64_t seed = 42;
  std::pair<int, int> roi_size = {512, 512};

  AugmentConfig augment;
  ModelConfig model;
  EngineConfig engine;

  bool operator==(const CbmtConfig&) const = default;
};

// Returns cfg unchanged when every invariant holds, otherwise throws
// std::invalid_argument naming the offending field.
CbmtConfig validate_config(const CbmtConfig& cfg);

// Flat TOML-style text: "key = value" lines plus [augment]/[model]/[engine]
// sections. parse + serialize round-trip to an equal config.
std::string serialize_config(const CbmtConfig& cfg);
CbmtConfig parse_config_text(const std::string& text, CbmtConfig base = {});
CbmtConfig load_config_file(const std::string& path, CbmtConfig base = {});

// Applies one "key=value" override (key may be dotted, e.g. augment.op_prob).
void apply_config_override(CbmtConfig& cfg, const std::string& key, const std::string& value);

// All scalar keys with current values, for CLI flag generation and dumps.
std::vector<std::pair<std::string, std::string>> config_items(const CbmtConfig& cfg);

// FNV-1a hash of the canonical serialization; stored in checkpoints.
uint64_t config_hash(const CbmtConfig& cfg);

}  // namespace cbmt
