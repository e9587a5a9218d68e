#include "cbmt/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cbmt/rng.hpp"

namespace fs = std::filesystem;

namespace cbmt {

DatasetManifest read_manifest(const std::string& path, Split split, const std::string& domain_tag,
                              std::pair<int, int> roi_size) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  m.split = split;
  m.domain_tag = domain_tag;
  m.roi_size = roi_size;

  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::getline(ls, e.id, ',');
    std::getline(ls, e.image_path, ',');
    std::getline(ls, e.mask_path, ',');
    if (e.id.empty() || e.image_path.empty())
      throw std::runtime_error("manifest " + path + " line " + std::to_string(lineno) +
                               ": expected 'id,image_path[,mask_path]'");
    if (!seen.insert(e.id).second)
      throw std::runtime_error("manifest " + path + ": duplicate id '" + e.id + "'");
    fs::path img = fs::path(m.root) / e.image_path;
    if (!fs::exists(img))
      throw std::runtime_error("manifest " + path + ": missing image file " + img.string());
    if (!e.mask_path.empty() && !fs::exists(fs::path(m.root) / e.mask_path))
      throw std::runtime_error("manifest " + path + ": missing mask file " +
                               (fs::path(m.root) / e.mask_path).string());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& e : entries) {
    f << e.id << "," << e.image_path;
    if (!e.mask_path.empty()) f << "," << e.mask_path;
    f << "\n";
  }
}

namespace {

Tensor fit_to_roi(const Tensor& t, std::pair<int, int> roi, bool is_mask) {
  const int rh = roi.first, rw = roi.second;
  if (t.h == rh && t.w == rw) return t;
  if (t.h >= rh && t.w >= rw) return center_fit(t, rh, rw, 0.f);
  return is_mask ? resize_nearest(t, rh, rw) : resize_bilinear(t, rh, rw);
}

}  // namespace

ImageSample load_sample(const DatasetManifest& manifest, size_t index, int num_classes) {
  const ManifestEntry& e = manifest.entries.at(index);
  ImageSample s;
  s.id = e.id;
  s.domain_tag = manifest.domain_tag;
  Tensor img = read_ppm((fs::path(manifest.root) / e.image_path).string());
  if (!e.mask_path.empty()) {
    Tensor mask = read_mask_pgm((fs::path(manifest.root) / e.mask_path).string(), num_classes);
    if (mask.h != img.h || mask.w != img.w)
      throw std::runtime_error("mask/image size mismatch for id '" + e.id + "': " +
                               mask.shape_str() + " vs " + img.shape_str());
    s.mask = fit_to_roi(mask, manifest.roi_size, true);
  }
  s.pixels = fit_to_roi(img, manifest.roi_size, false);
  for (float& v : s.pixels.data) v = std::clamp(v, 0.f, 1.f);
  validate_sample(s);
  return s;
}

std::vector<ImageSample> load_dataset(const DatasetManifest& manifest, int num_classes) {
  std::vector<ImageSample> out;
  out.reserve(manifest.entries.size());
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    out.push_back(load_sample(manifest, i, num_classes));
  return out;
}

float mean_intensity(const std::vector<ImageSample>& samples) {
  double sum = 0.0;
  size_t count = 0;
  for (const auto& s : samples) {
    for (float v : s.pixels.data) sum += v;
    count += s.pixels.data.size();
  }
  return count ? static_cast<float>(sum / count) : 0.5f;
}

namespace {

// Smooth value noise: coarse seeded grid, bilinearly upsampled.
Tensor value_noise(int h, int w, int grid, double amp, Rng& rng) {
  Tensor coarse(1, 1, grid, grid);
  for (float& v : coarse.data) v = static_cast<float>(rng.uniform(-amp, amp));
  return resize_bilinear(coarse, h, w);
}

struct Ellipse {
  double cy, cx, ry, rx;
  bool contains(double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
  // signed "radial" coordinate, ~1 at the boundary
  double radial(double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return std::sqrt(dy * dy + dx * dx);
  }
};

void add_soft_ellipse(Tensor& img, const Ellipse& e, const float rgb[3]) {
  // soft edge over roughly 2 pixels to avoid aliasing artifacts
  const double soft = 2.0 / std::min(e.ry, e.rx);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const double r = e.radial(y + 0.5, x + 0.5);
      if (r > 1.0 + soft) continue;
      double t = r <= 1.0 ? 1.0 : 1.0 - (r - 1.0) / soft;
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) += static_cast<float>(rgb[c] * t);
    }
}

void rasterize_ellipse(Tensor& mask, int channel, const Ellipse& e) {
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (e.contains(y + 0.5, x + 0.5)) mask.at(0, channel, y, x) = 1.f;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (double& k : kernel) k /= ksum;

  Tensor tmp = Tensor::zeros_like(img);
  Tensor out = Tensor::zeros_like(img);
  for (int c = 0; c < img.c; ++c) {
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int xx = std::clamp(x + i, 0, img.w - 1);
          acc += kernel[i + radius] * img.at(0, c, y, xx);
        }
        tmp.at(0, c, y, x) = static_cast<float>(acc);
      }
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int yy = std::clamp(y + i, 0, img.h - 1);
          acc += kernel[i + radius] * tmp.at(0, c, yy, x);
        }
        out.at(0, c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

void apply_domain_shift(Tensor& img, const DomainShift& shift) {
  if (shift.contrast_scale != 1.0 || shift.brightness_shift != 0.0) {
    double mean = 0.0;
    for (float v : img.data) mean += v;
    mean /= static_cast<double>(img.numel());
    for (float& v : img.data)
      v = static_cast<float>(mean + (v - mean) * shift.contrast_scale + shift.brightness_shift);
  }
  if (shift.blur_sigma > 0.0) img = gaussian_blur(img, shift.blur_sigma);
  for (float& v : img.data) v = std::clamp(v, 0.f, 1.f);
}

struct Scene {
  Tensor image;  // before domain shift
  Tensor mask;   // 1x2xHxW
};

Scene render_scene(const SynthSpec& spec, uint64_t content_seed, uint64_t texture_seed) {
  const int h = spec.image_size.first, w = spec.image_size.second;
  Rng rng(content_seed);

  Scene scene;
  scene.image = Tensor(1, 3, h, w);
  scene.mask = Tensor(1, 2, h, w);

  // fundus-like background: warm base + smooth texture + fine speckle
  const float base[3] = {0.52f, 0.27f, 0.11f};
  Rng tex_rng(texture_seed);
  Tensor smooth_r = value_noise(h, w, 8, 0.10, tex_rng);
  Tensor smooth_g = value_noise(h, w, 8, 0.06, tex_rng);
  Tensor smooth_b = value_noise(h, w, 8, 0.04, tex_rng);
  const Tensor* smooth[3] = {&smooth_r, &smooth_g, &smooth_b};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double dy = (y - h / 2.0) / (h / 2.0), dx = (x - w / 2.0) / (w / 2.0);
        double vignette = 1.0 - 0.25 * (dy * dy + dx * dx);
        double speckle = tex_rng.uniform(-0.02, 0.02);
        scene.image.at(0, c, y, x) = static_cast<float>(
            base[c] * vignette + smooth[c]->at(0, 0, y, x) + speckle);
      }

  // disc ellipse near the center
  const double rmin = std::min(h, w);
  const double disc_r = rng.uniform(spec.disc_radius_range.first, spec.disc_radius_range.second) * rmin;
  const double aspect = rng.uniform(0.85, 1.15);
  Ellipse disc;
  disc.ry = disc_r * aspect;
  disc.rx = disc_r / aspect;
  disc.cy = h / 2.0 + rng.uniform(-0.12, 0.12) * h;
  disc.cx = w / 2.0 + rng.uniform(-0.12, 0.12) * w;

  // cup strictly inside: scaled axes plus a jitter bounded by the margin
  const double ratio = rng.uniform(spec.cup_ratio_range.first, spec.cup_ratio_range.second);
  Ellipse cup;
  cup.ry = disc.ry * ratio;
  cup.rx = disc.rx * ratio;
  const double margin = (1.0 - ratio) * std::min(disc.ry, disc.rx);
  cup.cy = disc.cy + rng.uniform(-0.4, 0.4) * margin;
  cup.cx = disc.cx + rng.uniform(-0.4, 0.4) * margin;

  const float disc_rgb[3] = {0.26f, 0.20f, 0.09f};
  const float cup_rgb[3] = {0.17f, 0.16f, 0.10f};
  add_soft_ellipse(scene.image, disc, disc_rgb);
  add_soft_ellipse(scene.image, cup, cup_rgb);
  for (float& v : scene.image.data) v = std::clamp(v, 0.f, 1.f);

  rasterize_ellipse(scene.mask, 0, disc);
  rasterize_ellipse(scene.mask, 1, cup);
  // containment guarantee regardless of rasterization rounding
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (scene.mask.at(0, 1, y, x) == 1.f && scene.mask.at(0, 0, y, x) == 0.f)
        scene.mask.at(0, 1, y, x) = 0.f;
  return scene;
}

std::vector<ManifestEntry> write_split(const SynthSpec& spec, const std::string& split_dir,
                                       int count, uint64_t split_salt, bool target,
                                       bool with_masks) {
  fs::create_directories(split_dir);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < count; ++i) {
    // content streams are shared between domains so a null shift yields
    // byte-identical datasets; the texture stream may diverge via texture_seed
    uint64_t content = fnv1a("scene", fnv1a(&split_salt, sizeof(split_salt), spec.seed));
    content = fnv1a(&i, sizeof(i), content);
    uint64_t texture = fnv1a("texture", content);
    if (target && spec.domain_shift.texture_seed != 0)
      texture = fnv1a(&spec.domain_shift.texture_seed, sizeof(uint64_t), texture);

    Scene scene = render_scene(spec, content, texture);
    if (target) apply_domain_shift(scene.image, spec.domain_shift);

    char img_name[32], mask_name[32];
    std::snprintf(img_name, sizeof(img_name), "img_%04d.ppm", i);
    std::snprintf(mask_name, sizeof(mask_name), "mask_%04d.pgm", i);
    write_ppm((fs::path(split_dir) / img_name).string(), scene.image);
    write_mask_pgm((fs::path(split_dir) / mask_name).string(), scene.mask);

    ManifestEntry e;
    e.id = std::string(target ? "t" : "s") + "_" + std::to_string(split_salt) + "_" +
           std::to_string(i);
    e.image_path = img_name;
    if (with_masks) e.mask_path = mask_name;
    entries.push_back(std::move(e));
  }
  return entries;
}

DatasetManifest make_synth_manifest(const std::string& dir,
                                    const std::vector<ManifestEntry>& entries, Split split,
                                    const std::string& domain, std::pair<int, int> roi,
                                    const std::string& manifest_name = "manifest.txt") {
  write_manifest((fs::path(dir) / manifest_name).string(), entries);
  DatasetManifest m;
  m.root = dir;
  m.split = split;
  m.domain_tag = domain;
  m.entries = entries;
  m.roi_size = roi;
  return m;
}

}  // namespace

SynthDatasets generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
  if (!(spec.cup_ratio_range.first > 0.0 && spec.cup_ratio_range.second < 1.0))
    throw std::invalid_argument("SynthSpec: cup_ratio_range must be inside (0,1)");
  if (spec.n_images <= 0 || spec.n_test < 0)
    throw std::invalid_argument("SynthSpec: image counts must be positive");

  const auto roi = spec.image_size;
  SynthDatasets out;

  std::string s_train = (fs::path(out_dir) / "source" / "train").string();
  std::string s_test = (fs::path(out_dir) / "source" / "test").string();
  std::string t_train = (fs::path(out_dir) / "target" / "train").string();
  std::string t_test = (fs::path(out_dir) / "target" / "test").string();

  auto e_strain = write_split(spec, s_train, spec.n_images, 1, false, true);
  auto e_stest = write_split(spec, s_test, spec.n_test, 2, false, true);
  auto e_ttrain = write_split(spec, t_train, spec.n_images, 1, true, false);
  auto e_ttest = write_split(spec, t_test, spec.n_test, 2, true, true);

  out.source_train = make_synth_manifest(s_train, e_strain, Split::train, "source", roi);
  out.source_test = make_synth_manifest(s_test, e_stest, Split::test, "source", roi);
  out.target_train = make_synth_manifest(t_train, e_ttrain, Split::train, "target", roi);
  out.target_test = make_synth_manifest(t_test, e_ttest, Split::test, "target", roi);

  auto labeled = e_ttrain;
  for (size_t i = 0; i < labeled.size(); ++i) {
    char mask_name[32];
    std::snprintf(mask_name, sizeof(mask_name), "mask_%04d.pgm", static_cast<int>(i));
    labeled[i].mask_path = mask_name;
  }
  out.target_train_labeled = make_synth_manifest(t_train, labeled, Split::train, "target", roi,
                                                 "manifest_labeled.txt");
  return out;
}

}  // namespace cbmt
