#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cbmt/calibration.hpp"
#include "cbmt/config.hpp"
#include "cbmt/data_io.hpp"
#include "cbmt/metrics.hpp"
#include "cbmt/model.hpp"
#include "cbmt/snapshot.hpp"

namespace cbmt {

// One completed epoch. Dice/fg_frac hold NaN on epochs where evaluation was
// skipped (eval_every > 1); bg_weight is the value applied during the epoch.
struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::vector<double> dice;
  std::vector<double> bg_weight;
  std::vector<double> fg_frac;
  double wall_seconds = 0.0;
};

struct RunLog {
  int num_classes = 0;
  std::vector<EpochRecord> epochs;
};

void write_runlog_csv(const std::string& path, const RunLog& log);
RunLog read_runlog_csv(const std::string& path);

// Dice / fg-fraction / optional ASSD of a model over a labeled set.
struct ModelEval {
  EvalResult result;
  std::vector<double> mean_dice;  // per class
  std::vector<double> fg_frac;   // predicted foreground fraction per class
};

ModelEval evaluate_model(ModelAdapter& model, const std::vector<ImageSample>& samples,
                         double threshold, int batch_size, bool with_assd,
                         bool require_masks = true);

struct SourceTrainResult {
  ParamSnapshot snapshot;
  RunLog log;
};

// Supervised BCE training on labeled samples with the configured decayed
// learning-rate schedule. Every sample must carry a mask.
SourceTrainResult train_source(const std::vector<ImageSample>& train, const CbmtConfig& cfg,
                               ModelAdapter& model);

struct AdaptOptions {
  bool strong_aug = true;
  bool calibrate = true;
  double lambda_override = -1.0;  // < 0: cfg.lambda_ema
  double alpha_override = -1.0;   // < 0: cfg.alpha
  double lr_scale = 1.0;
  std::string checkpoint_dir;     // empty: keep checkpoints in memory only
  std::string stats_csv;          // per-epoch calibration stats log
  std::function<void(const std::string&)> warn;  // defaults to stderr
};

struct AdaptResult {
  ParamSnapshot final_teacher;  // the deliverable model
  ParamSnapshot final_student;
  RunLog log;
  std::vector<CalibrationStats> stats_history;  // one finalized entry per epoch
};

// The CBMT adaptation loop: per batch, weak augment -> teacher forward ->
// pseudo-labels -> strong augment -> student forward -> calibrated BCE ->
// optimizer step -> EMA update; statistics accumulate throughout and are
// finalized once per epoch. target_test (labels used for logging only) may
// be empty.
AdaptResult adapt(const std::vector<ImageSample>& target_train,
                  const std::vector<ImageSample>& target_test, const ParamSnapshot& source_ckpt,
                  const CbmtConfig& cfg, const AdaptOptions& opt = {});

// Table-style ablation grid over the framework's three components.
enum class AblationMode { pl, ema, ema_aug, ema_calib, full };
AblationMode ablation_mode_from_string(const std::string& s);
std::string to_string(AblationMode m);
AdaptOptions ablation_options(AblationMode mode, const CbmtConfig& cfg);
AdaptResult run_ablation(AblationMode mode, const std::vector<ImageSample>& target_train,
                         const std::vector<ImageSample>& target_test,
                         const ParamSnapshot& source_ckpt, const CbmtConfig& cfg);

// Final aggregate metrics plus run metadata; wall-clock is intentionally
// excluded so reruns with the same seed produce identical bytes.
void write_summary_json(const std::string& path, const ModelEval& eval,
                        const std::vector<std::string>& class_names, const CbmtConfig& cfg,
                        double final_mean_loss, int epochs_run);

}  // namespace cbmt
