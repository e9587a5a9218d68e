#include "cbmt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "cbmt/rng.hpp"

namespace cbmt {

std::string to_string(FilterMode m) {
  return m == FilterMode::distance_from_label ? "distance_from_label"
                                              : "literal_paper_formula";
}

FilterMode filter_mode_from_string(const std::string& s) {
  if (s == "distance_from_label") return FilterMode::distance_from_label;
  if (s == "literal_paper_formula") return FilterMode::literal_paper_formula;
  throw std::invalid_argument("filter_mode: unknown value '" + s + "'");
}

std::string to_string(EvalModel m) {
  switch (m) {
    case EvalModel::teacher: return "teacher";
    case EvalModel::student: return "student";
    default: return "both";
  }
}

EvalModel eval_model_from_string(const std::string& s) {
  if (s == "teacher") return EvalModel::teacher;
  if (s == "student") return EvalModel::student;
  if (s == "both") return EvalModel::both;
  throw std::invalid_argument("eval_model: unknown value '" + s + "'");
}

CbmtConfig validate_config(const CbmtConfig& cfg) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };

  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) fail("gamma out of (0,1)");
  if (!(cfg.lambda_ema >= 0.0 && cfg.lambda_ema <= 1.0)) fail("lambda_ema out of [0,1]");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) fail("alpha out of [0,1)");
  if (cfg.lr_adapt <= 0) fail("lr_adapt must be > 0");
  if (cfg.lr_source <= 0) fail("lr_source must be > 0");
  if (cfg.lr_source_decay <= 0 || cfg.lr_source_decay > 1) fail("lr_source_decay out of (0,1]");
  if (cfg.epochs_adapt < 0) fail("epochs_adapt must be >= 0");
  if (cfg.epochs_source < 0) fail("epochs_source must be >= 0");
  if (cfg.batch_size <= 0) fail("batch_size must be > 0");
  if (!(cfg.optimizer_momenta.first >= 0 && cfg.optimizer_momenta.first < 1))
    fail("optimizer_momenta.beta1 out of [0,1)");
  if (!(cfg.optimizer_momenta.second >= 0 && cfg.optimizer_momenta.second < 1))
    fail("optimizer_momenta.beta2 out of [0,1)");
  if (cfg.roi_size.first <= 0 || cfg.roi_size.second <= 0) fail("roi_size must be positive");
  for (int k : cfg.calibrated_classes)
    if (k < 0 || k >= cfg.model.num_classes) fail("calibrated_classes index out of range");

  const AugmentConfig& a = cfg.augment;
  if (a.flip_prob < 0 || a.flip_prob > 1) fail("augment.flip_prob out of [0,1]");
  if (a.op_prob < 0 || a.op_prob > 1) fail("augment.op_prob out of [0,1]");
  if (a.scale_min <= 0 || a.scale_min > a.scale_max) fail("augment.scale range invalid");
  if (a.erase_min_frac < 0 || a.erase_min_frac > a.erase_max_frac || a.erase_max_frac > 1)
    fail("augment.erase fraction range invalid");
  if (a.contrast_min < 0 || a.contrast_min > a.contrast_max) fail("augment.contrast range invalid");
  if (a.noise_min_frac < 0 || a.noise_min_frac > a.noise_max_frac || a.noise_max_frac > 1)
    fail("augment.noise fraction range invalid");

  if (cfg.model.num_classes <= 0) fail("model.num_classes must be > 0");
  if (cfg.model.arch != "tiny_unet" && cfg.model.arch != "pixel_affine")
    fail("model.arch must be tiny_unet or pixel_affine");
  if (cfg.model.eval_threshold <= 0 || cfg.model.eval_threshold >= 1)
    fail("model.eval_threshold out of (0,1)");
  if (cfg.model.bn_momentum < 0 || cfg.model.bn_momentum > 1)
    fail("model.bn_momentum out of [0,1]");
  if (cfg.engine.vanilla_lr_scale <= 0) fail("engine.vanilla_lr_scale must be > 0");
  if (cfg.engine.eval_every <= 0) fail("engine.eval_every must be > 0");
  if (cfg.engine.checkpoint_every < 0) fail("engine.checkpoint_every must be >= 0");
  return cfg;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

// "[a, b, c]" or "a,b,c" -> elements
std::vector<std::string> parse_list(const std::string& v) {
  std::string body = strip(v);
  if (!body.empty() && body.front() == '[' && body.back() == ']')
    body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::string cur;
  for (char ch : body) {
    if (ch == ',') {
      out.push_back(unquote(strip(cur)));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  std::string last = unquote(strip(cur));
  if (!last.empty()) out.push_back(last);
  return out;
}

int class_index_from_token(const std::string& tok) {
  if (tok == "disc") return 0;
  if (tok == "cup") return 1;
  return static_cast<int>(parse_int("calibrated_classes", tok));
}

}  // namespace

std::string serialize_config(const CbmtConfig& c) {
  std::ostringstream os;
  os << "gamma = " << fmt_double(c.gamma) << "\n";
  os << "lambda_ema = " << fmt_double(c.lambda_ema) << "\n";
  os << "alpha = " << fmt_double(c.alpha) << "\n";
  os << "calibrated_classes = [";
  bool first = true;
  for (int k : c.calibrated_classes) {
    if (!first) os << ", ";
    os << k;
    first = false;
  }
  os << "]\n";
  os << "lr_adapt = " << fmt_double(c.lr_adapt) << "\n";
  os << "lr_source = " << fmt_double(c.lr_source) << "\n";
  os << "lr_source_decay = " << fmt_double(c.lr_source_decay) << "\n";
  os << "epochs_adapt = " << c.epochs_adapt << "\n";
  os << "epochs_source = " << c.epochs_source << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "optimizer_momenta = [" << fmt_double(c.optimizer_momenta.first) << ", "
     << fmt_double(c.optimizer_momenta.second) << "]\n";
  os << "filter_mode = \"" << to_string(c.filter_mode) << "\"\n";
  os << "seed = " << c.seed << "\n";
  os << "roi_size = [" << c.roi_size.first << ", " << c.roi_size.second << "]\n";

  os << "\n[augment]\n";
  os << "flip_prob = " << fmt_double(c.augment.flip_prob) << "\n";
  os << "scale_min = " << fmt_double(c.augment.scale_min) << "\n";
  os << "scale_max = " << fmt_double(c.augment.scale_max) << "\n";
  os << "op_prob = " << fmt_double(c.augment.op_prob) << "\n";
  os << "erase = " << (c.augment.erase ? "true" : "false") << "\n";
  os << "erase_min_frac = " << fmt_double(c.augment.erase_min_frac) << "\n";
  os << "erase_max_frac = " << fmt_double(c.augment.erase_max_frac) << "\n";
  os << "contrast = " << (c.augment.contrast ? "true" : "false") << "\n";
  os << "contrast_min = " << fmt_double(c.augment.contrast_min) << "\n";
  os << "contrast_max = " << fmt_double(c.augment.contrast_max) << "\n";
  os << "noise = " << (c.augment.noise ? "true" : "false") << "\n";
  os << "noise_min_frac = " << fmt_double(c.augment.noise_min_frac) << "\n";
  os << "noise_max_frac = " << fmt_double(c.augment.noise_max_frac) << "\n";
  os << "loss_on_erased = " << (c.augment.loss_on_erased ? "true" : "false") << "\n";

  os << "\n[model]\n";
  os << "arch = \"" << c.model.arch << "\"\n";
  os << "num_classes = " << c.model.num_classes << "\n";
  os << "ema_include_buffers = " << (c.model.ema_include_buffers ? "true" : "false") << "\n";
  os << "eval_model = \"" << to_string(c.model.eval_model) << "\"\n";
  os << "eval_threshold = " << fmt_double(c.model.eval_threshold) << "\n";
  os << "bn_momentum = " << fmt_double(c.model.bn_momentum) << "\n";

  os << "\n[engine]\n";
  os << "weak_aug = " << (c.engine.weak_aug ? "true" : "false") << "\n";
  os << "calib_streaming = " << (c.engine.calib_streaming ? "true" : "false") << "\n";
  os << "debug_prediction_bank = " << (c.engine.debug_prediction_bank ? "true" : "false") << "\n";
  os << "vanilla_lr_scale = " << fmt_double(c.engine.vanilla_lr_scale) << "\n";
  os << "eval_every = " << c.engine.eval_every << "\n";
  os << "checkpoint_every = " << c.engine.checkpoint_every << "\n";
  return os.str();
}

void apply_config_override(CbmtConfig& c, const std::string& raw_key, const std::string& raw_value) {
  std::string key = strip(raw_key);
  std::string v = unquote(strip(raw_value));

  if (key == "gamma") c.gamma = parse_double(key, v);
  else if (key == "lambda_ema") c.lambda_ema = parse_double(key, v);
  else if (key == "alpha") c.alpha = parse_double(key, v);
  else if (key == "calibrated_classes") {
    c.calibrated_classes.clear();
    for (const auto& tok : parse_list(v)) c.calibrated_classes.insert(class_index_from_token(tok));
  }
  else if (key == "lr_adapt") c.lr_adapt = parse_double(key, v);
  else if (key == "lr_source") c.lr_source = parse_double(key, v);
  else if (key == "lr_source_decay") c.lr_source_decay = parse_double(key, v);
  else if (key == "epochs_adapt") c.epochs_adapt = static_cast<int>(parse_int(key, v));
  else if (key == "epochs_source") c.epochs_source = static_cast<int>(parse_int(key, v));
  else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, v));
  else if (key == "optimizer_momenta") {
    auto xs = parse_list(v);
    if (xs.size() != 2) throw std::invalid_argument("optimizer_momenta: expected two values");
    c.optimizer_momenta = {parse_double(key, xs[0]), parse_double(key, xs[1])};
  }
  else if (key == "filter_mode") c.filter_mode = filter_mode_from_string(v);
  else if (key == "seed") c.seed = static_cast<uint64_t>(parse_int(key, v));
  else if (key == "roi_size") {
    auto xs = parse_list(v);
    if (xs.size() != 2) throw std::invalid_argument("roi_size: expected two values");
    c.roi_size = {static_cast<int>(parse_int(key, xs[0])), static_cast<int>(parse_int(key, xs[1]))};
  }
  else if (key == "augment.flip_prob") c.augment.flip_prob = parse_double(key, v);
  else if (key == "augment.scale_min") c.augment.scale_min = parse_double(key, v);
  else if (key == "augment.scale_max") c.augment.scale_max = parse_double(key, v);
  else if (key == "augment.op_prob") c.augment.op_prob = parse_double(key, v);
  else if (key == "augment.erase") c.augment.erase = parse_bool(key, v);
  else if (key == "augment.erase_min_frac") c.augment.erase_min_frac = parse_double(key, v);
  else if (key == "augment.erase_max_frac") c.augment.erase_max_frac = parse_double(key, v);
  else if (key == "augment.contrast") c.augment.contrast = parse_bool(key, v);
  else if (key == "augment.contrast_min") c.augment.contrast_min = parse_double(key, v);
  else if (key == "augment.contrast_max") c.augment.contrast_max = parse_double(key, v);
  else if (key == "augment.noise") c.augment.noise = parse_bool(key, v);
  else if (key == "augment.noise_min_frac") c.augment.noise_min_frac = parse_double(key, v);
  else if (key == "augment.noise_max_frac") c.augment.noise_max_frac = parse_double(key, v);
  else if (key == "augment.loss_on_erased") c.augment.loss_on_erased = parse_bool(key, v);
  else if (key == "model.arch") c.model.arch = v;
  else if (key == "model.num_classes") c.model.num_classes = static_cast<int>(parse_int(key, v));
  else if (key == "model.ema_include_buffers") c.model.ema_include_buffers = parse_bool(key, v);
  else if (key == "model.eval_model") c.model.eval_model = eval_model_from_string(v);
  else if (key == "model.eval_threshold") c.model.eval_threshold = parse_double(key, v);
  else if (key == "model.bn_momentum") c.model.bn_momentum = parse_double(key, v);
  else if (key == "engine.weak_aug") c.engine.weak_aug = parse_bool(key, v);
  else if (key == "engine.calib_streaming") c.engine.calib_streaming = parse_bool(key, v);
  else if (key == "engine.debug_prediction_bank") c.engine.debug_prediction_bank = parse_bool(key, v);
  else if (key == "engine.vanilla_lr_scale") c.engine.vanilla_lr_scale = parse_double(key, v);
  else if (key == "engine.eval_every") c.engine.eval_every = static_cast<int>(parse_int(key, v));
  else if (key == "engine.checkpoint_every") c.engine.checkpoint_every = static_cast<int>(parse_int(key, v));
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

CbmtConfig parse_config_text(const std::string& text, CbmtConfig base) {
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = strip(s.substr(1, s.size() - 2));
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + s + "'");
    std::string key = strip(s.substr(0, eq));
    std::string value = strip(s.substr(eq + 1));
    // strip trailing inline comment outside quotes
    bool in_quote = false;
    for (size_t i = 0; i < value.size(); ++i) {
      if (value[i] == '"') in_quote = !in_quote;
      else if (value[i] == '#' && !in_quote) {
        value = strip(value.substr(0, i));
        break;
      }
    }
    std::string full = section.empty() ? key : section + "." + key;
    try {
      apply_config_override(base, full, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

CbmtConfig load_config_file(const std::string& path, CbmtConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_items(const CbmtConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(serialize_config(c));
  std::string line, section;
  while (std::getline(is, line)) {
    std::string s = strip(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      section = s.substr(1, s.size() - 2);
      continue;
    }
    size_t eq = s.find('=');
    std::string key = strip(s.substr(0, eq));
    std::string value = unquote(strip(s.substr(eq + 1)));
    out.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  return out;
}

uint64_t config_hash(const CbmtConfig& cfg) {
  return fnv1a(serialize_config(cfg));
}

}  // namespace cbmt
