#include "cbmt/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace cbmt {

void validate_sample(const ImageSample& s) {
  if (s.pixels.n != 1 || s.pixels.c != 3)
    throw std::invalid_argument("ImageSample '" + s.id + "': pixels must be 1x3xHxW, got " +
                                s.pixels.shape_str());
  for (float v : s.pixels.data)
    if (!(v >= 0.f && v <= 1.f))
      throw std::invalid_argument("ImageSample '" + s.id + "': pixel value out of [0,1]");
  if (s.mask) {
    if (s.mask->n != 1 || s.mask->h != s.pixels.h || s.mask->w != s.pixels.w)
      throw std::invalid_argument("ImageSample '" + s.id + "': mask shape " +
                                  s.mask->shape_str() + " does not match pixels " +
                                  s.pixels.shape_str());
    for (float v : s.mask->data)
      if (v != 0.f && v != 1.f)
        throw std::invalid_argument("ImageSample '" + s.id + "': mask value not in {0,1}");
  }
}

namespace {

int read_pnm_token(std::istream& in, const std::string& path) {
  // skips whitespace and '#' comments
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string junk;
      std::getline(in, junk);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  if (!in) throw std::runtime_error("malformed PNM header in " + path);
  return v;
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return f;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  auto f = open_binary(path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '6') throw std::runtime_error("not a binary PPM (P6): " + path);
  int w = read_pnm_token(f, path);
  int h = read_pnm_token(f, path);
  int maxval = read_pnm_token(f, path);
  if (maxval != 255) throw std::runtime_error("unsupported PPM maxval in " + path);
  f.get();  // single whitespace after header
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error("truncated PPM data in " + path);
  Tensor out(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        out.at(0, ch, y, x) = raw[(static_cast<size_t>(y) * w + x) * 3 + ch] / 255.f;
  return out;
}

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.n != 1 || rgb.c != 3) throw std::invalid_argument("write_ppm: expected 1x3xHxW");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << "P6\n" << rgb.w << " " << rgb.h << "\n255\n";
  std::vector<uint8_t> raw(static_cast<size_t>(rgb.w) * rgb.h * 3);
  for (int y = 0; y < rgb.h; ++y)
    for (int x = 0; x < rgb.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        float v = std::clamp(rgb.at(0, ch, y, x), 0.f, 1.f);
        raw[(static_cast<size_t>(y) * rgb.w + x) * 3 + ch] =
            static_cast<uint8_t>(std::lround(v * 255.f));
      }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Tensor read_pgm_raw(const std::string& path) {
  auto f = open_binary(path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw std::runtime_error("not a binary PGM (P5): " + path);
  int w = read_pnm_token(f, path);
  int h = read_pnm_token(f, path);
  int maxval = read_pnm_token(f, path);
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval in " + path);
  f.get();
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error("truncated PGM data in " + path);
  Tensor out(1, 1, h, w);
  for (size_t i = 0; i < raw.size(); ++i) out.data[i] = raw[i] / 255.f;
  return out;
}

void write_pgm_raw(const std::string& path, const Tensor& gray) {
  if (gray.n != 1 || gray.c != 1) throw std::invalid_argument("write_pgm: expected 1x1xHxW");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << "P5\n" << gray.w << " " << gray.h << "\n255\n";
  std::vector<uint8_t> raw(gray.numel());
  for (size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<uint8_t>(std::lround(std::clamp(gray.data[i], 0.f, 1.f) * 255.f));
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Tensor decode_mask_levels(const Tensor& gray, int num_classes) {
  if (gray.c != 1) throw std::invalid_argument("decode_mask_levels: expected single channel");
  Tensor mask(1, num_classes, gray.h, gray.w);
  for (int y = 0; y < gray.h; ++y)
    for (int x = 0; x < gray.w; ++x) {
      int level = static_cast<int>(std::lround(gray.at(0, 0, y, x) * 255.f));
      if (num_classes > 0) mask.at(0, 0, y, x) = level >= 128 ? 1.f : 0.f;  // disc = union
      if (num_classes > 1) mask.at(0, 1, y, x) = level == 255 ? 1.f : 0.f;  // cup
    }
  return mask;
}

Tensor encode_mask_levels(const Tensor& mask) {
  if (mask.n != 1 || mask.c < 1) throw std::invalid_argument("encode_mask_levels: expected 1xCxHxW");
  Tensor gray(1, 1, mask.h, mask.w);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      float disc = mask.at(0, 0, y, x);
      float cup = mask.c > 1 ? mask.at(0, 1, y, x) : 0.f;
      float level = cup > 0.5f ? 255.f : (disc > 0.5f ? 128.f : 0.f);
      gray.at(0, 0, y, x) = level / 255.f;
    }
  return gray;
}

Tensor read_mask_pgm(const std::string& path, int num_classes) {
  return decode_mask_levels(read_pgm_raw(path), num_classes);
}

void write_mask_pgm(const std::string& path, const Tensor& mask) {
  write_pgm_raw(path, encode_mask_levels(mask));
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  if (out_h == img.h && out_w == img.w) return img;
  Tensor out(img.n, img.c, out_h, out_w);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int n = 0; n < img.n; ++n)
    for (int c = 0; c < img.c; ++c)
      for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, img.h - 1);
        int y1c = std::clamp(y0 + 1, 0, img.h - 1);
        for (int x = 0; x < out_w; ++x) {
          double fx = (x + 0.5) * sx - 0.5;
          int x0 = static_cast<int>(std::floor(fx));
          double wx = fx - x0;
          int x0c = std::clamp(x0, 0, img.w - 1);
          int x1c = std::clamp(x0 + 1, 0, img.w - 1);
          double v00 = img.at(n, c, y0c, x0c), v01 = img.at(n, c, y0c, x1c);
          double v10 = img.at(n, c, y1c, x0c), v11 = img.at(n, c, y1c, x1c);
          double top = v00 + (v01 - v00) * wx;
          double bot = v10 + (v11 - v10) * wx;
          out.at(n, c, y, x) = static_cast<float>(top + (bot - top) * wy);
        }
      }
  return out;
}

Tensor resize_nearest(const Tensor& img, int out_h, int out_w) {
  if (out_h == img.h && out_w == img.w) return img;
  Tensor out(img.n, img.c, out_h, out_w);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int n = 0; n < img.n; ++n)
    for (int c = 0; c < img.c; ++c)
      for (int y = 0; y < out_h; ++y) {
        int sy_i = std::min(static_cast<int>((y + 0.5) * sy), img.h - 1);
        for (int x = 0; x < out_w; ++x) {
          int sx_i = std::min(static_cast<int>((x + 0.5) * sx), img.w - 1);
          out.at(n, c, y, x) = img.at(n, c, sy_i, sx_i);
        }
      }
  return out;
}

Tensor center_fit(const Tensor& img, int roi_h, int roi_w, float pad_value) {
  if (img.h == roi_h && img.w == roi_w) return img;
  Tensor out(img.n, img.c, roi_h, roi_w, pad_value);
  int src_y = std::max(0, (img.h - roi_h) / 2);
  int src_x = std::max(0, (img.w - roi_w) / 2);
  int dst_y = std::max(0, (roi_h - img.h) / 2);
  int dst_x = std::max(0, (roi_w - img.w) / 2);
  int copy_h = std::min(img.h, roi_h);
  int copy_w = std::min(img.w, roi_w);
  for (int n = 0; n < img.n; ++n)
    for (int c = 0; c < img.c; ++c)
      for (int y = 0; y < copy_h; ++y)
        for (int x = 0; x < copy_w; ++x)
          out.at(n, c, dst_y + y, dst_x + x) = img.at(n, c, src_y + y, src_x + x);
  return out;
}

}  // namespace cbmt
