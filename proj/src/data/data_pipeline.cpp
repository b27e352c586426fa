// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "tensor/ften.hpp"
#include "tensor/ops.hpp"

namespace fudsa {

namespace fs = std::filesystem;

void SamplePair::validate() const {
  if (!image.defined() || !mask.defined()) fail(ErrorCode::InvalidArgument, "sample '" + id + "' is incomplete");
  if (!(image.shape() == mask.shape()) || image.shape().n != 1 || image.shape().c != 1) {
    fail(ErrorCode::InvalidShape, "sample '" + id + "': image " + image.shape().str() + " and mask " +
                                      mask.shape().str() + " must both be (1,1,H,W)");
  }
  for (float v : image.data()) {
    if (!(v >= 0.f && v <= 1.f)) fail(ErrorCode::InvalidArgument, "sample '" + id + "': image outside [0,1]");
  }
  for (float v : mask.data()) {
    if (v != 0.f && v != 1.f) fail(ErrorCode::InvalidLabel, "sample '" + id + "': mask is not binary");
  }
}

Tensor<float> window_and_normalize(const RawSlice& raw, double lo_hu, double hi_hu) {
  if (!(lo_hu < hi_hu)) fail(ErrorCode::InvalidArgument, "HU window requires lo < hi");
  if (raw.height < 1 || raw.width < 1 ||
      raw.pixels.size() != static_cast<std::size_t>(raw.height * raw.width)) {
    fail(ErrorCode::InvalidShape, "slice '" + raw.id + "' has inconsistent extents");
  }
  Tensor<float> out(Shape{1, 1, raw.height, raw.width});
  auto d = out.mutable_data();
  const double range = hi_hu - lo_hu;
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(raw.pixels[i]), lo_hu, hi_hu);
    d[i] = static_cast<float>((v - lo_hu) / range);
  }
  return out;
}

SamplePair resize_pair(const SamplePair& pair, std::int64_t target, int levels) {
  const std::int64_t unit = std::int64_t{1} << levels;
  if (target < 8 || target % unit != 0) {
    fail(ErrorCode::InvalidArgument, "resize target " + std::to_string(target) +
                                         " must be >= 8 and divisible by " + std::to_string(unit));
  }
  SamplePair out;
  out.id = pair.id;
  out.image = resize(pair.image, target, target, UpsampleMode::Bilinear);
  out.mask = resize(pair.mask, target, target, UpsampleMode::Nearest);
  for (auto& v : out.mask.mutable_data()) v = v >= 0.5f ? 1.f : 0.f;
  for (auto& v : out.image.mutable_data()) v = std::clamp(v, 0.f, 1.f);
  return out;
}

std::vector<SamplePair> filter_lesion_slices(const std::vector<SamplePair>& pairs) {
  std::vector<SamplePair> kept;
  for (const auto& p : pairs) {
    const auto m = p.mask.data();
    if (std::any_of(m.begin(), m.end(), [](float v) { return v > 0.f; })) kept.push_back(p);
  }
  return kept;
}

SplitManifest split_dataset(const std::vector<std::string>& ids, std::uint64_t seed) {
  if (ids.size() < 2) fail(ErrorCode::InvalidArgument, "a split needs at least 2 ids");
  std::vector<std::string> order = ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = (order.size() * 4 + 4) / 5;  // ceil(0.8 n)
  SplitManifest m;
  m.seed = seed;
  m.train_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.val_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return m;
}

bool Ellipse::contains(double y, double x) const {
  const double dy = y - cy;
  const double dx = x - cx;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

void PhantomOptions::validate() const {
  if (size < 16) fail(ErrorCode::InvalidArgument, "phantom size must be >= 16");
  if (min_lesions < 0 || max_lesions < min_lesions) {
    fail(ErrorCode::InvalidArgument, "lesion count range must satisfy 0 <= min <= max");
  }
  if (!(min_contrast_hu <= max_contrast_hu)) fail(ErrorCode::InvalidArgument, "contrast range must satisfy min <= max");
  if (!(noise_sd_hu >= 0.0)) fail(ErrorCode::InvalidArgument, "noise sd must be >= 0");
  if (!(blur_sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "blur sigma must be >= 0");
}

namespace {

void gaussian_blur(std::vector<double>& img, std::int64_t h, std::int64_t w, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= total;
  std::vector<double> tmp(img.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::int64_t xx = std::clamp<std::int64_t>(x + i, 0, w - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * img[static_cast<std::size_t>(y * w + xx)];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::int64_t yy = std::clamp<std::int64_t>(y + i, 0, h - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy * w + x)];
      }
      img[static_cast<std::size_t>(y * w + x)] = acc;
    }
}

bool inside_with_margin(const Ellipse& outer, const Ellipse& e, double margin) {
  const double c = std::cos(e.theta);
  const double sn = std::sin(e.theta);
  for (int k = 0; k < 64; ++k) {
    const double t = 2.0 * std::numbers::pi * k / 64.0;
    const double u = (e.a + margin) * std::cos(t);
    const double v = (e.b + margin) * std::sin(t);
    if (!outer.contains(e.cy + sn * u + c * v, e.cx + c * u - sn * v)) return false;
  }
  return outer.contains(e.cy, e.cx);
}

}  // namespace

Phantom synth_phantom(std::uint64_t seed, const PhantomOptions& opt) {
  opt.validate();
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const auto s = static_cast<double>(opt.size);
  const std::int64_t n = opt.size;

  const Ellipse body{0.5 * s * uni(0.97, 1.03), 0.5 * s * uni(0.97, 1.03), 0.46 * s * uni(0.95, 1.0),
                     0.38 * s * uni(0.95, 1.0), uni(-0.05, 0.05)};
  std::vector<Ellipse> lungs;
  for (double side : {0.3, 0.7}) {
    lungs.push_back({0.5 * s * uni(0.97, 1.03), side * s * uni(0.98, 1.02), 0.16 * s * uni(0.9, 1.05),
                     0.3 * s * uni(0.9, 1.05), uni(-0.1, 0.1)});
  }

  std::vector<double> base(static_cast<std::size_t>(n * n), -1000.0);
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) {
      const double py = static_cast<double>(y) + 0.5;
      const double px = static_cast<double>(x) + 0.5;
      double v = -1000.0;
      if (body.contains(py, px)) v = 40.0;
      for (const auto& l : lungs) {
        if (l.contains(py, px)) v = -850.0;
      }
      base[static_cast<std::size_t>(y * n + x)] = v;
    }

  Phantom out;
  const int count = std::uniform_int_distribution<int>(opt.min_lesions, opt.max_lesions)(rng);
  const double min_axis = std::max(2.5, 0.05 * s);
  const double max_axis = std::max(min_axis + 1.0, 0.12 * s);
  std::vector<double> lesion_layer(base.size(), 0.0);
  out.mask.assign(base.size(), 0);
  for (int k = 0; k < count; ++k) {
    const Ellipse& lung = lungs[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 1)(rng))];
    Ellipse e;
    e.a = uni(min_axis, max_axis);
    e.b = uni(min_axis, max_axis);
    e.theta = uni(0.0, std::numbers::pi);
    // Whole lesion plus a blur margin inside the lung field, so no lesion
    // tissue lands on the (window-clipped) body region.
    for (int attempt = 1;; ++attempt) {
      e.cy = lung.cy + uni(-1.0, 1.0) * lung.b;
      e.cx = lung.cx + uni(-1.0, 1.0) * lung.b;
      if (inside_with_margin(lung, e, 1.0)) break;
      if (attempt % 200 == 0) {
        e.a = std::max(0.5 * min_axis, 0.9 * e.a);
        e.b = std::max(0.5 * min_axis, 0.9 * e.b);
      }
    }
    const double contrast = uni(opt.min_contrast_hu, opt.max_contrast_hu);
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x) {
        if (!e.contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) continue;
        const auto i = static_cast<std::size_t>(y * n + x);
        lesion_layer[i] = std::max(lesion_layer[i], contrast);
        out.mask[i] = 1;
      }
    out.lesions.push_back(e);
  }
  gaussian_blur(lesion_layer, n, n, opt.blur_sigma);

  std::normal_distribution<double> noise(0.0, 1.0);
  out.raw.id = "phantom_" + std::to_string(seed);
  out.raw.height = n;
  out.raw.width = n;
  out.raw.pixels.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double v = base[i] + lesion_layer[i] + opt.noise_sd_hu * noise(rng);
    out.raw.pixels[i] = static_cast<std::int16_t>(std::clamp(std::round(v), -32768.0, 32767.0));
  }
  return out;
}

SamplePair phantom_pair(const Phantom& phantom) {
  SamplePair p;
  p.id = phantom.raw.id;
  p.image = window_and_normalize(phantom.raw);
  p.mask = Tensor<float>(Shape{1, 1, phantom.raw.height, phantom.raw.width});
  auto m = p.mask.mutable_data();
  for (std::size_t i = 0; i < phantom.mask.size(); ++i) m[i] = phantom.mask[i] ? 1.f : 0.f;
  return p;
}

namespace {

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  fail(ErrorCode::Io, path.string() + ": " + what);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  return out;
}

struct PgmHeader {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int maxval = 0;
};

PgmHeader read_pgm_header(std::istream& in, const fs::path& path) {
  auto token = [&]() {
    std::string t;
    for (;;) {
      const int c = in.get();
      if (c == EOF) io_fail(path, "truncated PGM header");
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) return t;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
  };
  if (token() != "P5") io_fail(path, "not a binary PGM (P5)");
  PgmHeader h;
  try {
    h.width = std::stoll(token());
    h.height = std::stoll(token());
    h.maxval = std::stoi(token());
  } catch (const std::exception&) {
    io_fail(path, "malformed PGM header");
  }
  if (h.width < 1 || h.height < 1 || h.maxval < 1 || h.maxval > 65535) io_fail(path, "invalid PGM header values");
  return h;
}

}  // namespace

void write_pgm16(const fs::path& path, const RawSlice& slice) {
  auto out = open_out(path);
  out << "P5\n" << slice.width << " " << slice.height << "\n65535\n";
  std::string bytes(slice.pixels.size() * 2, '\0');
  for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(static_cast<int>(slice.pixels[i]) + kHuOffset);
    bytes[2 * i] = static_cast<char>(v >> 8);
    bytes[2 * i + 1] = static_cast<char>(v & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_fail(path, "write failed");
}

RawSlice read_pgm16(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  const PgmHeader h = read_pgm_header(in, path);
  if (h.maxval != 65535) io_fail(path, "expected a 16-bit PGM (maxval 65535)");
  const auto count = static_cast<std::size_t>(h.width * h.height);
  std::string bytes(count * 2, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) io_fail(path, "truncated PGM payload");
  RawSlice s;
  s.id = path.stem().string();
  s.height = h.height;
  s.width = h.width;
  s.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int v = (static_cast<unsigned char>(bytes[2 * i]) << 8) | static_cast<unsigned char>(bytes[2 * i + 1]);
    s.pixels[i] = static_cast<std::int16_t>(v - kHuOffset);
  }
  return s;
}

void write_mask_pgm(const fs::path& path, std::int64_t height, std::int64_t width,
                    const std::vector<std::uint8_t>& mask) {
  if (mask.size() != static_cast<std::size_t>(height * width)) {
    fail(ErrorCode::InvalidShape, "mask size does not match its extents");
  }
  auto out = open_out(path);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::string bytes(mask.size(), '\0');
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = static_cast<char>(mask[i] ? 255 : 0);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_fail(path, "write failed");
}

std::vector<std::uint8_t> read_mask_pgm(const fs::path& path, std::int64_t& height, std::int64_t& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  const PgmHeader h = read_pgm_header(in, path);
  const std::size_t bps = h.maxval > 255 ? 2 : 1;
  const auto count = static_cast<std::size_t>(h.width * h.height);
  std::string bytes(count * bps, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) io_fail(path, "truncated PGM payload");
  std::vector<std::uint8_t> mask(count);
  for (std::size_t i = 0; i < count; ++i) {
    const bool on = bps == 1 ? bytes[i] != 0 : (bytes[2 * i] != 0 || bytes[2 * i + 1] != 0);
    mask[i] = on ? 1 : 0;
  }
  height = h.height;
  width = h.width;
  return mask;
}

Tensor<float> read_mask_tensor(const fs::path& path) {
  std::int64_t h = 0, w = 0;
  const auto m = read_mask_pgm(path, h, w);
  Tensor<float> t(Shape{1, 1, h, w});
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) d[i] = m[i] ? 1.f : 0.f;
  return t;
}

void write_mask_tensor(const fs::path& path, const Tensor<float>& mask) {
  const Shape& s = mask.shape();
  if (s.n != 1 || s.c != 1) fail(ErrorCode::InvalidShape, "mask tensor must be (1,1,H,W)");
  std::vector<std::uint8_t> m(static_cast<std::size_t>(s.h * s.w));
  const auto d = mask.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = d[i] >= 0.5f ? 1 : 0;
  write_mask_pgm(path, s.h, s.w, m);
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ostringstream text;
  for (const auto& id : manifest.ids) text << id << "\n";
  if (manifest.split) {
    text << "# split seed=" << manifest.split->seed << "\n";
    text << "train:\n";
    for (const auto& id : manifest.split->train_ids) text << id << "\n";
    text << "val:\n";
    for (const auto& id : manifest.split->val_ids) text << id << "\n";
  }
  auto out = open_out(path);
  out << text.str();
  if (!out) io_fail(path, "write failed");
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) io_fail(path, "cannot open manifest");
  Manifest m;
  enum class Section { Ids, Train, Val } section = Section::Ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# split seed=", 0) == 0) {
      SplitManifest split;
      try {
        split.seed = std::stoull(line.substr(13));
      } catch (const std::exception&) {
        io_fail(path, "malformed split seed");
      }
      m.split = split;
      continue;
    }
    if (line[0] == '#') continue;
    if (line == "train:" || line == "val:") {
      if (!m.split) io_fail(path, "split section without a '# split seed=' trailer");
      section = line == "train:" ? Section::Train : Section::Val;
      continue;
    }
    if (line.find_first_of(" \t/\\") != std::string::npos) io_fail(path, "invalid id '" + line + "'");
    switch (section) {
      case Section::Ids: m.ids.push_back(line); break;
      case Section::Train: m.split->train_ids.push_back(line); break;
      case Section::Val: m.split->val_ids.push_back(line); break;
    }
  }
  if (m.split) {
    std::vector<std::string> all = m.split->train_ids;
    all.insert(all.end(), m.split->val_ids.begin(), m.split->val_ids.end());
    std::vector<std::string> ids = m.ids;
    std::sort(all.begin(), all.end());
    std::sort(ids.begin(), ids.end());
    if (all != ids) io_fail(path, "split sections do not partition the id list");
  }
  return m;
}

void write_raw_dataset(const fs::path& root, const std::vector<Phantom>& phantoms) {
  Manifest manifest;
  for (const auto& p : phantoms) {
    write_pgm16(root / "images" / (p.raw.id + ".pgm"), p.raw);
    write_mask_pgm(root / "masks" / (p.raw.id + ".pgm"), p.raw.height, p.raw.width, p.mask);
    manifest.ids.push_back(p.raw.id);
  }
  write_manifest(root / "manifest.txt", manifest);
}

PreprocessSummary preprocess_dataset(const fs::path& in_root, const fs::path& out_root,
                                     const PreprocessOptions& opt) {
  if (!(opt.lo_hu < opt.hi_hu)) fail(ErrorCode::InvalidArgument, "HU window requires lo < hi");
  const Manifest in_manifest = read_manifest(in_root / "manifest.txt");
  std::vector<SamplePair> pairs;
  for (const auto& id : in_manifest.ids) {
    const RawSlice raw = read_pgm16(in_root / "images" / (id + ".pgm"));
    SamplePair p;
    p.id = id;
    p.image = window_and_normalize(raw, opt.lo_hu, opt.hi_hu);
    const fs::path mask_path = in_root / "masks" / (id + ".pgm");
    p.mask = read_mask_tensor(mask_path);
    if (!(p.mask.shape() == p.image.shape())) io_fail(mask_path, "mask extents differ from the image");
    pairs.push_back(resize_pair(p, opt.size, opt.levels));
  }
  const auto kept = filter_lesion_slices(pairs);
  PreprocessSummary summary;
  summary.input_count = pairs.size();
  summary.kept_count = kept.size();

  std::error_code ec;
  fs::create_directories(out_root / "images", ec);
  if (ec) io_fail(out_root / "images", "cannot create directory");
  fs::create_directories(out_root / "masks", ec);
  if (ec) io_fail(out_root / "masks", "cannot create directory");
  Manifest out_manifest;
  for (const auto& p : kept) {
    save_ften(out_root / "images" / (p.id + ".ften"), p.image);
    write_mask_tensor(out_root / "masks" / (p.id + ".pgm"), p.mask);
    out_manifest.ids.push_back(p.id);
  }
  summary.split = split_dataset(out_manifest.ids, opt.seed);
  out_manifest.split = summary.split;
  write_manifest(out_root / "manifest.txt", out_manifest);

  auto cfg = open_out(out_root / "preprocess.cfg");
  cfg << "lo_hu=" << opt.lo_hu << "\n"
      << "hi_hu=" << opt.hi_hu << "\n"
      << "size=" << opt.size << "\n"
      << "levels=" << opt.levels << "\n"
      << "seed=" << opt.seed << "\n";
  return summary;
}

SamplePair load_pair(const fs::path& root, const std::string& id) {
  SamplePair p;
  p.id = id;
  const fs::path ften = root / "images" / (id + ".ften");
  if (fs::exists(ften)) {
    p.image = load_ften<float>(ften);
  } else {
    p.image = window_and_normalize(read_pgm16(root / "images" / (id + ".pgm")));
  }
  p.mask = read_mask_tensor(root / "masks" / (id + ".pgm"));
  if (!(p.image.shape() == p.mask.shape())) {
    fail(ErrorCode::Io, (root / "masks" / (id + ".pgm")).string() + ": mask extents differ from the image");
  }
  return p;
}

std::vector<SamplePair> load_pairs(const fs::path& root, const std::vector<std::string>& ids) {
  std::vector<SamplePair> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_pair(root, id));
  return out;
}

}  // namespace fudsa
