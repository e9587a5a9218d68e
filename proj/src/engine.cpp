#include "cbmt/engine.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cbmt/augment.hpp"
#include "cbmt/meanteacher.hpp"
#include "cbmt/pseudo.hpp"
#include "cbmt/rng.hpp"

namespace fs = std::filesystem;

namespace cbmt {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void default_warn(const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; }

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (size_t i = n; i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void write_csv_cell(std::ostream& os, double v) {
  if (std::isnan(v))
    os << "nan";
  else
    os << v;
}

// Tracks kept per-pixel losses verbatim so the O(1) accumulators can be
// cross-checked at finalize time (debug_prediction_bank).
struct PredictionBank {
  std::vector<std::vector<double>> fg, bg;  // per class
  void resize(int num_classes) {
    fg.resize(num_classes);
    bg.resize(num_classes);
  }
  void add(const Tensor& losses, const PseudoLabelMap& labels, const PixelFilterMask& keep) {
    const int plane = losses.h * losses.w;
    for (int n = 0; n < losses.n; ++n)
      for (int c = 0; c < losses.c; ++c) {
        const float* l = losses.plane(n, c);
        const float* y = labels.labels.plane(n, c);
        const float* k = keep.keep.plane(n, c);
        for (int i = 0; i < plane; ++i) {
          if (k[i] == 0.f) continue;
          (y[i] == 1.f ? fg[c] : bg[c]).push_back(l[i]);
        }
      }
  }
  void check_and_reset(const CalibrationStats& finalized) {
    for (size_t c = 0; c < fg.size(); ++c) {
      const ClassStats& cs = finalized.per_class[c];
      auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
      };
      if (cs.last_count_fg != static_cast<long long>(fg[c].size()) ||
          cs.last_count_bg != static_cast<long long>(bg[c].size()))
        throw std::logic_error("prediction bank: kept-pixel count mismatch");
      if (cs.last_count_fg > 0 && cs.last_count_bg > 0) {
        double ratio = mean_of(fg[c]) / mean_of(bg[c]);
        if (std::abs(ratio - cs.bg_weight) > 1e-9 * std::max(1.0, std::abs(cs.bg_weight)))
          throw std::logic_error("prediction bank: bg_weight mismatch vs accumulators");
      }
      fg[c].clear();
      bg[c].clear();
    }
  }
};

Tensor batch_pixels(const std::vector<const ImageSample*>& samples) {
  std::vector<const Tensor*> ts;
  ts.reserve(samples.size());
  for (const auto* s : samples) ts.push_back(&s->pixels);
  return stack(ts);
}

Tensor batch_masks(const std::vector<const ImageSample*>& samples) {
  std::vector<const Tensor*> ts;
  ts.reserve(samples.size());
  for (const auto* s : samples) ts.push_back(&*s->mask);
  return stack(ts);
}

}  // namespace

void write_runlog_csv(const std::string& path, const RunLog& log) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write runlog: " + path);
  f.precision(12);
  f << "epoch,mean_loss";
  for (int c = 0; c < log.num_classes; ++c) f << ",dice_" << c;
  for (int c = 0; c < log.num_classes; ++c) f << ",bg_weight_" << c;
  for (int c = 0; c < log.num_classes; ++c) f << ",fg_frac_" << c;
  f << ",wall_seconds\n";
  for (const auto& e : log.epochs) {
    f << e.epoch << ",";
    write_csv_cell(f, e.mean_loss);
    for (int c = 0; c < log.num_classes; ++c) {
      f << ",";
      write_csv_cell(f, c < static_cast<int>(e.dice.size()) ? e.dice[c] : kNan);
    }
    for (int c = 0; c < log.num_classes; ++c) {
      f << ",";
      write_csv_cell(f, c < static_cast<int>(e.bg_weight.size()) ? e.bg_weight[c] : kNan);
    }
    for (int c = 0; c < log.num_classes; ++c) {
      f << ",";
      write_csv_cell(f, c < static_cast<int>(e.fg_frac.size()) ? e.fg_frac[c] : kNan);
    }
    f << "," << e.wall_seconds << "\n";
  }
}

RunLog read_runlog_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open runlog: " + path);
  std::string header;
  if (!std::getline(f, header))
    throw std::runtime_error("runlog " + path + " line 1: empty file");
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string tok;
    while (std::getline(hs, tok, ',')) cols.push_back(tok);
  }
  if (cols.empty() || cols[0] != "epoch")
    throw std::runtime_error("runlog " + path + " line 1: expected 'epoch' column first");

  RunLog log;
  for (const auto& cname : cols)
    if (cname.rfind("dice_", 0) == 0)
      log.num_classes = std::max(log.num_classes, std::stoi(cname.substr(5)) + 1);

  std::string line;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      try {
        vals.push_back(tok == "nan" ? kNan : std::stod(tok));
      } catch (...) {
        throw std::runtime_error("runlog " + path + " line " + std::to_string(lineno) +
                                 ": bad value '" + tok + "'");
      }
    }
    if (vals.size() != cols.size())
      throw std::runtime_error("runlog " + path + " line " + std::to_string(lineno) +
                               ": expected " + std::to_string(cols.size()) + " columns, got " +
                               std::to_string(vals.size()));
    EpochRecord rec;
    rec.epoch = static_cast<int>(vals[0]);
    for (size_t i = 1; i < cols.size(); ++i) {
      const std::string& cname = cols[i];
      if (cname == "mean_loss") rec.mean_loss = vals[i];
      else if (cname == "wall_seconds") rec.wall_seconds = vals[i];
      else if (cname.rfind("dice_", 0) == 0) {
        size_t c = std::stoul(cname.substr(5));
        if (rec.dice.size() <= c) rec.dice.resize(c + 1, kNan);
        rec.dice[c] = vals[i];
      } else if (cname.rfind("bg_weight_", 0) == 0) {
        size_t c = std::stoul(cname.substr(10));
        if (rec.bg_weight.size() <= c) rec.bg_weight.resize(c + 1, kNan);
        rec.bg_weight[c] = vals[i];
      } else if (cname.rfind("fg_frac_", 0) == 0) {
        size_t c = std::stoul(cname.substr(8));
        if (rec.fg_frac.size() <= c) rec.fg_frac.resize(c + 1, kNan);
        rec.fg_frac[c] = vals[i];
      }
    }
    log.epochs.push_back(std::move(rec));
  }
  return log;
}

ModelEval evaluate_model(ModelAdapter& model, const std::vector<ImageSample>& samples,
                         double threshold, int batch_size, bool with_assd, bool require_masks) {
  if (samples.empty()) throw std::invalid_argument("evaluate_model: empty sample set");
  const RunMode prev_mode = model.mode();
  model.set_mode(RunMode::eval);

  ModelEval out;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> dices, assds;
  int num_classes = 0;
  std::vector<long long> fg_count;
  long long pixel_count = 0;

  for (size_t start = 0; start < samples.size(); start += batch_size) {
    size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const ImageSample*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&samples[i]);
    Tensor logits = model.forward(batch_pixels(batch));
    Tensor probs = sigmoid(logits);
    num_classes = probs.c;
    fg_count.resize(num_classes, 0);

    for (size_t bi = 0; bi < batch.size(); ++bi) {
      const ImageSample& s = *batch[bi];
      for (int c = 0; c < num_classes; ++c) {
        Mask2D pred = mask_from_tensor(probs, static_cast<int>(bi), c,
                                       static_cast<float>(threshold));
        long long on = 0;
        for (uint8_t v : pred.v) on += v;
        fg_count[c] += on;
      }
      pixel_count += static_cast<long long>(probs.h) * probs.w;

      if (!s.mask) {
        if (require_masks)
          throw std::invalid_argument("evaluate_model: unlabeled sample '" + s.id + "'");
        continue;
      }
      std::vector<double> d(num_classes), a(num_classes, kNan);
      for (int c = 0; c < num_classes; ++c) {
        Mask2D pred = mask_from_tensor(probs, static_cast<int>(bi), c,
                                       static_cast<float>(threshold));
        Mask2D truth = mask_from_tensor(*s.mask, 0, c);
        d[c] = dice(pred, truth);
        if (with_assd) a[c] = assd(pred, truth);
      }
      ids.push_back(s.id);
      dices.push_back(std::move(d));
      assds.push_back(std::move(a));
    }
  }
  model.set_mode(prev_mode);

  out.result = aggregate_eval(ids, dices, assds);
  out.mean_dice.assign(num_classes, kNan);
  for (int c = 0; c < num_classes && c < static_cast<int>(out.result.per_class.size()); ++c)
    out.mean_dice[c] = out.result.per_class[c].dice_mean;
  out.fg_frac.assign(num_classes, 0.0);
  for (int c = 0; c < num_classes; ++c)
    out.fg_frac[c] = pixel_count ? static_cast<double>(fg_count[c]) / pixel_count : 0.0;
  return out;
}

SourceTrainResult train_source(const std::vector<ImageSample>& train, const CbmtConfig& cfg,
                               ModelAdapter& model) {
  validate_config(cfg);
  if (train.empty()) throw std::invalid_argument("train_source: empty training set");
  for (const auto& s : train)
    if (!s.mask)
      throw std::invalid_argument("train_source: unlabeled sample '" + s.id + "'");

  const int num_classes = cfg.model.num_classes;
  AdamOptimizer adam(cfg.optimizer_momenta.first, cfg.optimizer_momenta.second);
  CalibrationStats no_stats(num_classes);
  const std::set<int> no_calibration;

  SourceTrainResult res;
  res.log.num_classes = num_classes;

  for (int epoch = 0; epoch < cfg.epochs_source; ++epoch) {
    const double t0 = now_seconds();
    const double lr = cfg.lr_source * std::pow(cfg.lr_source_decay, epoch);
    auto order = shuffled_indices(train.size(), derive_seed(cfg.seed, "source_order", epoch));

    double loss_sum = 0.0;
    long long loss_batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<ImageSample> views;
      views.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const ImageSample& s = train[order[i]];
        if (cfg.engine.weak_aug) {
          Rng rng(derive_seed(cfg.seed, s.id, epoch));
          views.push_back(weak_augment(s, cfg.augment, rng).view);
        } else {
          views.push_back(s);
        }
      }
      std::vector<const ImageSample*> ptrs;
      for (const auto& v : views) ptrs.push_back(&v);

      model.set_mode(RunMode::train);
      Tensor logits = model.forward(batch_pixels(ptrs));
      ProbMap probs = make_prob_map(logits, Producer::source);
      PseudoLabelMap truth{batch_masks(ptrs), 0.0, "ground_truth"};

      const double loss = calibrated_bce(probs, truth, no_stats, no_calibration);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_source: non-finite loss at epoch " +
                                 std::to_string(epoch));
      Tensor dlogits = calibrated_bce_grad_logits(probs, truth, no_stats, no_calibration);
      model.zero_grad();
      model.backward(dlogits);
      adam.step(model.trainable_params(), lr);
      loss_sum += loss;
      ++loss_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    rec.dice.assign(num_classes, kNan);
    rec.bg_weight.assign(num_classes, 1.0);
    rec.fg_frac.assign(num_classes, kNan);
    rec.wall_seconds = now_seconds() - t0;
    res.log.epochs.push_back(std::move(rec));
  }
  res.snapshot = model.read_params();
  res.snapshot.step = adam.steps();
  return res;
}

AdaptResult adapt(const std::vector<ImageSample>& target_train,
                  const std::vector<ImageSample>& target_test, const ParamSnapshot& source_ckpt,
                  const CbmtConfig& cfg, const AdaptOptions& opt) {
  validate_config(cfg);
  if (target_train.empty()) throw std::invalid_argument("adapt: empty target set");

  const auto warn = opt.warn ? opt.warn : default_warn;
  const int num_classes = cfg.model.num_classes;
  const double lambda = opt.lambda_override >= 0.0 ? opt.lambda_override : cfg.lambda_ema;
  const double alpha = opt.alpha_override >= 0.0 ? opt.alpha_override : cfg.alpha;
  const std::set<int> calibrated = opt.calibrate ? cfg.calibrated_classes : std::set<int>{};
  const double lr = cfg.lr_adapt * opt.lr_scale;

  ModelBuilder builder = [&cfg]() { return build_model(cfg.model, cfg.seed); };
  TeacherStudentPair pair =
      init_pair(source_ckpt, builder, lambda, cfg.model.ema_include_buffers);
  pair.teacher->set_mode(RunMode::eval);
  pair.student->set_mode(RunMode::train);

  const float fill_value = mean_intensity(target_train);
  AdamOptimizer adam(cfg.optimizer_momenta.first, cfg.optimizer_momenta.second);

  CalibrationStats stats(num_classes);
  PredictionBank bank;
  if (cfg.engine.debug_prediction_bank) bank.resize(num_classes);

  std::ofstream stats_csv;
  if (!opt.stats_csv.empty()) {
    stats_csv.open(opt.stats_csv);
    if (!stats_csv) throw std::runtime_error("cannot write stats csv: " + opt.stats_csv);
    stats_csv << "epoch,class,eta_fg,eta_bg,bg_weight,kept_fg_count,kept_bg_count\n";
    stats_csv.precision(12);
  }

  AdaptResult res;
  res.log.num_classes = num_classes;

  for (int epoch = 0; epoch < cfg.epochs_adapt; ++epoch) {
    const double t0 = now_seconds();
    // weights applied throughout this epoch: frozen at the previous finalize
    std::vector<double> applied(num_classes, 1.0);
    {
      auto w = background_weights(stats, calibrated);
      for (int c = 0; c < num_classes && c < static_cast<int>(w.size()); ++c) applied[c] = w[c];
    }

    auto order = shuffled_indices(target_train.size(), derive_seed(cfg.seed, "adapt_order", epoch));
    double loss_sum = 0.0;
    long long loss_batches = 0;

    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<AugmentedPair> pairs;
      pairs.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const ImageSample& s = target_train[order[i]];
        uint64_t seed = derive_seed(cfg.seed, s.id, epoch);
        if (cfg.engine.weak_aug) {
          if (opt.strong_aug) {
            pairs.push_back(make_augmented_pair(s, cfg.augment, fill_value, seed));
          } else {
            Rng rng(seed);
            AugmentedPair p;
            WeakAugmentResult wres = weak_augment(s, cfg.augment, rng);
            p.geo = wres.geo;
            p.strong_view = wres.view;
            p.weak_view = std::move(wres.view);
            pairs.push_back(std::move(p));
          }
        } else {
          AugmentedPair p;
          p.weak_view = s;
          if (opt.strong_aug) {
            Rng rng(seed);
            p.strong_view = strong_augment(s, cfg.augment, fill_value, rng);
          } else {
            p.strong_view = s;
          }
          pairs.push_back(std::move(p));
        }
      }

      std::vector<const ImageSample*> weak_ptrs, strong_ptrs;
      for (const auto& p : pairs) {
        weak_ptrs.push_back(&p.weak_view);
        strong_ptrs.push_back(&p.strong_view);
      }

      Tensor t_logits = pair.teacher->forward(batch_pixels(weak_ptrs));
      ProbMap t_probs = make_prob_map(t_logits, Producer::teacher);
      PseudoLabelMap pseudo = make_pseudo_labels(t_probs, cfg.gamma, "teacher");

      Tensor s_logits = pair.student->forward(batch_pixels(strong_ptrs));
      ProbMap s_probs = make_prob_map(s_logits, Producer::student);

      // unit-weight losses feed the statistics so the calibration weight
      // never compounds through its own estimate
      BceResult raw = bce_loss(s_probs, pseudo);
      PixelFilterMask keep =
          informative_pixel_mask(s_probs, pseudo, cfg.gamma, alpha, cfg.filter_mode);
      stats = accumulate_stats(std::move(stats), raw.per_pixel, pseudo, keep);
      if (cfg.engine.debug_prediction_bank) bank.add(raw.per_pixel, pseudo, keep);

      double loss;
      Tensor dlogits;
      if (cfg.engine.calib_streaming) {
        CalibrationStats live = finalize_epoch(stats, nullptr);
        loss = calibrated_bce(s_probs, pseudo, live, calibrated);
        dlogits = calibrated_bce_grad_logits(s_probs, pseudo, live, calibrated);
      } else {
        loss = calibrated_bce(s_probs, pseudo, stats, calibrated);
        dlogits = calibrated_bce_grad_logits(s_probs, pseudo, stats, calibrated);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("adapt: non-finite loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(loss_batches));

      pair.student->zero_grad();
      pair.student->backward(dlogits);
      adam.step(pair.student->trainable_params(), lr);
      ema_update(pair);

      loss_sum += loss;
      ++loss_batches;
    }

    stats = finalize_epoch(std::move(stats), warn);
    if (cfg.engine.debug_prediction_bank) bank.check_and_reset(stats);
    res.stats_history.push_back(stats);
    if (stats_csv.is_open()) {
      for (int c = 0; c < num_classes; ++c) {
        const ClassStats& cs = stats.per_class[c];
        stats_csv << epoch << "," << c << "," << cs.eta_fg << "," << cs.eta_bg << ","
                  << cs.bg_weight << "," << cs.last_count_fg << "," << cs.last_count_bg << "\n";
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    rec.bg_weight = applied;
    rec.dice.assign(num_classes, kNan);
    rec.fg_frac.assign(num_classes, kNan);
    const bool eval_now =
        !target_test.empty() &&
        (epoch % cfg.engine.eval_every == 0 || epoch == cfg.epochs_adapt - 1);
    if (eval_now) {
      ModelAdapter& eval_model = cfg.model.eval_model == EvalModel::student ? *pair.student
                                                                            : *pair.teacher;
      ModelEval ev = evaluate_model(eval_model, target_test, cfg.model.eval_threshold,
                                    cfg.batch_size, /*with_assd=*/false,
                                    /*require_masks=*/false);
      rec.dice = ev.mean_dice;
      rec.fg_frac = ev.fg_frac;
    }
    rec.wall_seconds = now_seconds() - t0;
    res.log.epochs.push_back(std::move(rec));

    if (!opt.checkpoint_dir.empty() && cfg.engine.checkpoint_every > 0 &&
        (epoch + 1) % cfg.engine.checkpoint_every == 0) {
      ParamSnapshot t = pair.teacher->read_params();
      t.step = pair.step;
      ParamSnapshot s = pair.student->read_params();
      s.step = pair.step;
      const uint64_t h = config_hash(cfg);
      save_snapshot((fs::path(opt.checkpoint_dir) / ("ckpt_epoch" + std::to_string(epoch) + ".bin"))
                        .string(),
                    t, h);
      save_snapshot((fs::path(opt.checkpoint_dir) /
                     ("ckpt_epoch" + std::to_string(epoch) + "_student.bin"))
                        .string(),
                    s, h);
    }
  }

  res.final_teacher = pair.teacher->read_params();
  res.final_teacher.step = pair.step;
  res.final_student = pair.student->read_params();
  res.final_student.step = pair.step;
  return res;
}

AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "pl") return AblationMode::pl;
  if (s == "ema") return AblationMode::ema;
  if (s == "ema_aug") return AblationMode::ema_aug;
  if (s == "ema_calib") return AblationMode::ema_calib;
  if (s == "full") return AblationMode::full;
  throw std::invalid_argument("unknown ablation mode '" + s +
                              "' (expected pl|ema|ema_aug|ema_calib|full)");
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::pl: return "pl";
    case AblationMode::ema: return "ema";
    case AblationMode::ema_aug: return "ema_aug";
    case AblationMode::ema_calib: return "ema_calib";
    default: return "full";
  }
}

AdaptOptions ablation_options(AblationMode mode, const CbmtConfig& cfg) {
  AdaptOptions opt;
  switch (mode) {
    case AblationMode::pl:
      // vanilla pseudo-labeling: teacher tracks the student instantly and
      // the learning rate is reduced to keep the run comparable
      opt.lambda_override = 0.0;
      opt.strong_aug = false;
      opt.calibrate = false;
      opt.alpha_override = 0.0;
      opt.lr_scale = cfg.engine.vanilla_lr_scale;
      break;
    case AblationMode::ema:
      opt.strong_aug = false;
      opt.calibrate = false;
      break;
    case AblationMode::ema_aug:
      opt.strong_aug = true;
      opt.calibrate = false;
      break;
    case AblationMode::ema_calib:
      opt.strong_aug = false;
      opt.calibrate = true;
      break;
    case AblationMode::full:
      break;
  }
  return opt;
}

AdaptResult run_ablation(AblationMode mode, const std::vector<ImageSample>& target_train,
                         const std::vector<ImageSample>& target_test,
                         const ParamSnapshot& source_ckpt, const CbmtConfig& cfg) {
  return adapt(target_train, target_test, source_ckpt, cfg, ablation_options(mode, cfg));
}

void write_summary_json(const std::string& path, const ModelEval& eval,
                        const std::vector<std::string>& class_names, const CbmtConfig& cfg,
                        double final_mean_loss, int epochs_run) {
  nlohmann::json j;
  j["epochs"] = epochs_run;
  j["final_mean_loss"] = final_mean_loss;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  for (size_t c = 0; c < eval.result.per_class.size(); ++c) {
    std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    const ClassAggregate& a = eval.result.per_class[c];
    j["metrics"][name] = {{"dice_mean", a.dice_mean},
                          {"dice_std", a.dice_std},
                          {"assd_mean", a.assd_mean},
                          {"assd_std", a.assd_std}};
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write summary: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace cbmt
