// Copyright (c) 2026 The polynet authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/rng.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

/// Loaded dataset. Image tasks use [N,C,H,W] tensors in [0,1] (before
/// standardization); synthetic dense tasks use [N,D]. Regression tasks carry
/// `targets` instead of class labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  Tensor targets;  // defined for regression tasks only
  int class_count = 0;
  std::string split;

  int size() const { return images.defined() ? images.dim(0) : 0; }
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: records of 3073 bytes, 1 label byte (0-9) followed
// by 3072 pixel bytes (1024 red, 1024 green, 1024 blue, row-major 32x32).
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

}  // namespace detail

inline Dataset load_cifar10_binary(const std::vector<std::string>& paths,
                                   const std::string& split = "train") {
  constexpr std::size_t kRecord = 3073;
  constexpr int kPixels = 3072;
  std::vector<Real> pixels;
  std::vector<int> labels;
  for (const std::string& path : paths) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() % kRecord != 0)
      throw FormatError(path + ": length " + std::to_string(bytes.size()) +
                        " is not a multiple of 3073; partial record begins at byte offset " +
                        std::to_string((bytes.size() / kRecord) * kRecord));
    const std::size_t records = bytes.size() / kRecord;
    pixels.reserve(pixels.size() + records * kPixels);
    for (std::size_t r = 0; r < records; ++r) {
      const unsigned char label = bytes[r * kRecord];
      if (label > 9)
        throw FormatError(path + ": label byte " + std::to_string(int(label)) +
                          " out of range at byte offset " + std::to_string(r * kRecord));
      labels.push_back(label);
      for (int p = 0; p < kPixels; ++p)
        pixels.push_back(static_cast<Real>(bytes[r * kRecord + 1 + p]) / 255.0);
    }
  }
  Dataset ds;
  ds.images = Tensor(Shape{static_cast<int>(labels.size()), 3, 32, 32}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.class_count = 10;
  ds.split = split;
  return ds;
}

/// Writes records in the CIFAR-10 binary layout (pixels rounded to bytes).
inline void write_cifar10_binary(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  const int n = ds.size();
  for (int r = 0; r < n; ++r) {
    out.put(static_cast<char>(ds.labels[static_cast<std::size_t>(r)]));
    for (int p = 0; p < 3072; ++p) {
      const Real v = ds.images[static_cast<std::int64_t>(r) * 3072 + p];
      out.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
    }
  }
}

/// Locates the standard CIFAR-10 binary files under `root` (directly or in a
/// cifar-10-batches-bin subdirectory) and loads both splits, scaled to [0,1].
inline std::pair<Dataset, Dataset> load_cifar10_dir(const std::string& root) {
  namespace fs = std::filesystem;
  fs::path base = root;
  if (!fs::exists(base / "data_batch_1.bin") && fs::exists(base / "cifar-10-batches-bin"))
    base /= "cifar-10-batches-bin";
  std::vector<std::string> train_files;
  for (int i = 1; i <= 5; ++i) {
    fs::path f = base / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(f))
      throw FormatError("missing CIFAR-10 file " + f.string());
    train_files.push_back(f.string());
  }
  fs::path test_file = base / "test_batch.bin";
  if (!fs::exists(test_file)) throw FormatError("missing CIFAR-10 file " + test_file.string());
  return {load_cifar10_binary(train_files, "train"),
          load_cifar10_binary({test_file.string()}, "test")};
}

// ---------------------------------------------------------------------------
// IDX format (big-endian headers): images magic 0x00000803 (u8, 3-D),
// labels magic 0x00000801 (u8, 1-D).
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                               const std::string& path) {
  if (off + 4 > b.size()) throw FormatError(path + ": truncated header");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  out.put(static_cast<char>((v >> 24) & 0xff));
  out.put(static_cast<char>((v >> 16) & 0xff));
  out.put(static_cast<char>((v >> 8) & 0xff));
  out.put(static_cast<char>(v & 0xff));
}

}  // namespace detail

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const std::string& split = "train") {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);
  if (detail::read_be32(img, 0, images_path) != 0x00000803u)
    throw FormatError(images_path + ": bad IDX image magic");
  if (detail::read_be32(lab, 0, labels_path) != 0x00000801u)
    throw FormatError(labels_path + ": bad IDX label magic");
  const std::uint32_t n = detail::read_be32(img, 4, images_path);
  const std::uint32_t rows = detail::read_be32(img, 8, images_path);
  const std::uint32_t cols = detail::read_be32(img, 12, images_path);
  const std::uint32_t nl = detail::read_be32(lab, 4, labels_path);
  if (n != nl)
    throw FormatError("IDX image count " + std::to_string(n) + " does not match label count " +
                      std::to_string(nl));
  const std::size_t want = 16 + std::size_t(n) * rows * cols;
  if (img.size() != want)
    throw FormatError(images_path + ": expected " + std::to_string(want) + " bytes, found " +
                      std::to_string(img.size()));
  if (lab.size() != 8 + std::size_t(n))
    throw FormatError(labels_path + ": expected " + std::to_string(8 + std::size_t(n)) +
                      " bytes, found " + std::to_string(lab.size()));
  std::vector<Real> pixels(std::size_t(n) * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<Real>(img[16 + i]) / 255.0;
  Dataset ds;
  ds.images = Tensor(Shape{static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)},
                     std::move(pixels));
  ds.labels.assign(lab.begin() + 8, lab.end());
  int maxl = 0;
  for (int l : ds.labels) maxl = std::max(maxl, l);
  ds.class_count = maxl + 1;
  ds.split = split;
  return ds;
}

inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const Dataset& ds) {
  const int n = ds.size(), h = ds.images.dim(2), w = ds.images.dim(3);
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot write " + images_path);
  detail::write_be32(img, 0x00000803u);
  detail::write_be32(img, static_cast<std::uint32_t>(n));
  detail::write_be32(img, static_cast<std::uint32_t>(h));
  detail::write_be32(img, static_cast<std::uint32_t>(w));
  for (std::int64_t i = 0; i < ds.images.size(); ++i)
    img.put(static_cast<char>(static_cast<int>(std::lround(ds.images[i] * 255.0))));
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("cannot write " + labels_path);
  detail::write_be32(lab, 0x00000801u);
  detail::write_be32(lab, static_cast<std::uint32_t>(n));
  for (int l : ds.labels) lab.put(static_cast<char>(l));
}

// ---------------------------------------------------------------------------
// Standardization (train statistics only; the test split reuses them)
// ---------------------------------------------------------------------------

struct ChannelStats {
  std::vector<Real> mean, stddev;
};

inline ChannelStats compute_channel_stats(const Dataset& ds) {
  const int c = ds.images.dim(1);
  const std::int64_t per = ds.images.size() / c;
  ChannelStats s;
  s.mean.assign(static_cast<std::size_t>(c), 0.0);
  s.stddev.assign(static_cast<std::size_t>(c), 0.0);
  const int n = ds.size(), hw = ds.images.dim(2) * ds.images.dim(3);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = ds.images.values().data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) s.mean[static_cast<std::size_t>(ch)] += src[p];
    }
  for (int ch = 0; ch < c; ++ch) s.mean[static_cast<std::size_t>(ch)] /= static_cast<Real>(per);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = ds.images.values().data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) {
        const Real d = src[p] - s.mean[static_cast<std::size_t>(ch)];
        s.stddev[static_cast<std::size_t>(ch)] += d * d;
      }
    }
  for (int ch = 0; ch < c; ++ch) {
    s.stddev[static_cast<std::size_t>(ch)] =
        std::sqrt(s.stddev[static_cast<std::size_t>(ch)] / static_cast<Real>(per));
    if (s.stddev[static_cast<std::size_t>(ch)] < 1e-8) s.stddev[static_cast<std::size_t>(ch)] = 1.0;
  }
  return s;
}

inline void standardize(Dataset& ds, const ChannelStats& stats) {
  const int c = ds.images.dim(1);
  const int n = ds.size(), hw = ds.images.dim(2) * ds.images.dim(3);
  auto& v = ds.images.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      Real* dst = v.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p)
        dst[p] = (dst[p] - stats.mean[static_cast<std::size_t>(ch)]) /
                 stats.stddev[static_cast<std::size_t>(ch)];
    }
}

// ---------------------------------------------------------------------------
// Augmentation and sampling
// ---------------------------------------------------------------------------

/// Random crop with zero padding plus optional horizontal flip (p = 0.5).
/// pad 0 with flipping disabled is the identity (the evaluation path).
inline Tensor augment(const Tensor& batch, int pad, bool flip, std::mt19937_64& rng) {
  if (pad < 0) throw ValidationError("augment: pad must be >= 0");
  if (batch.ndim() != 4)
    throw DimensionError("augment expects [N,C,H,W], got " + shape_str(batch.shape()));
  if (pad == 0 && !flip) return batch;
  const int n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::uniform_int_distribution<int> off(0, 2 * pad);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<Real> out(batch.values().size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const int dy = pad > 0 ? off(rng) : 0;
    const int dx = pad > 0 ? off(rng) : 0;
    const bool do_flip = flip && coin(rng) == 1;
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = batch.values().data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      Real* dst = out.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = y + dy - pad;
          const int sx = x + dx - pad;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          const int tx = do_flip ? w - 1 - x : x;
          dst[static_cast<std::size_t>(y) * w + tx] = src[static_cast<std::size_t>(sy) * w + sx];
        }
    }
  }
  return Tensor(batch.shape(), std::move(out));
}

/// Exactly m examples of every class, selected deterministically from the
/// seed, in shuffled order.
inline Dataset subsample_per_class(const Dataset& ds, int m, std::uint64_t seed) {
  if (ds.class_count <= 0) throw ValidationError("subsample_per_class needs labeled data");
  std::vector<std::vector<int>> per_class(static_cast<std::size_t>(ds.class_count));
  for (int i = 0; i < ds.size(); ++i)
    per_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<int> chosen;
  for (int c = 0; c < ds.class_count; ++c) {
    auto& pool = per_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(pool.size()) < m)
      throw ValidationError("class " + std::to_string(c) + " has only " +
                            std::to_string(pool.size()) + " examples, need " + std::to_string(m));
    auto rng = make_rng(seed, "subsample", static_cast<std::uint64_t>(c));
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + m);
  }
  auto rng = make_rng(seed, "subsample_order");
  std::shuffle(chosen.begin(), chosen.end(), rng);

  const std::int64_t stride = ds.images.size() / ds.size();
  std::vector<Real> pixels(static_cast<std::size_t>(chosen.size()) * stride);
  std::vector<int> labels(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    std::copy_n(ds.images.values().begin() + chosen[i] * stride, stride,
                pixels.begin() + static_cast<std::int64_t>(i) * stride);
    labels[i] = ds.labels[static_cast<std::size_t>(chosen[i])];
  }
  Shape shape = ds.images.shape();
  shape[0] = static_cast<int>(chosen.size());
  Dataset out;
  out.images = Tensor(std::move(shape), std::move(pixels));
  out.labels = std::move(labels);
  out.class_count = ds.class_count;
  out.split = ds.split;
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic tasks (oracle-grade)
// ---------------------------------------------------------------------------

enum class SynthKind { Xor, Moons, PolyRegression };

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "xor") return SynthKind::Xor;
  if (s == "moons") return SynthKind::Moons;
  if (s == "poly_regression") return SynthKind::PolyRegression;
  throw ValidationError("unknown synthetic dataset '" + s + "'");
}

/// xor: four gaussian clusters at (±1,±1), label = sign of the center
/// product. moons: two interleaving half circles. poly_regression:
/// targets y = z1² plus gaussian noise.
inline Dataset synth_dataset(SynthKind kind, int n, Real noise, std::uint64_t seed) {
  if (n < 4) throw ValidationError("synthetic datasets need n >= 4");
  auto rng = make_rng(seed, "synth");
  std::normal_distribution<Real> gauss(0.0, 1.0);
  std::uniform_real_distribution<Real> uni(-1.0, 1.0);
  Dataset ds;
  ds.split = "train";
  std::vector<Real> pts(static_cast<std::size_t>(n) * 2);
  switch (kind) {
    case SynthKind::Xor: {
      ds.class_count = 2;
      ds.labels.resize(static_cast<std::size_t>(n));
      const Real cx[4] = {1, 1, -1, -1};
      const Real cy[4] = {1, -1, 1, -1};
      for (int i = 0; i < n; ++i) {
        const int c = i % 4;
        pts[static_cast<std::size_t>(i) * 2] = cx[c] + noise * gauss(rng);
        pts[static_cast<std::size_t>(i) * 2 + 1] = cy[c] + noise * gauss(rng);
        ds.labels[static_cast<std::size_t>(i)] = cx[c] * cy[c] > 0 ? 1 : 0;
      }
      break;
    }
    case SynthKind::Moons: {
      ds.class_count = 2;
      ds.labels.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Real t = M_PI * (static_cast<Real>(i / 2) / std::max(1, n / 2 - 1));
        if (i % 2 == 0) {
          pts[static_cast<std::size_t>(i) * 2] = std::cos(t) + noise * gauss(rng);
          pts[static_cast<std::size_t>(i) * 2 + 1] = std::sin(t) + noise * gauss(rng);
          ds.labels[static_cast<std::size_t>(i)] = 0;
        } else {
          pts[static_cast<std::size_t>(i) * 2] = 1.0 - std::cos(t) + noise * gauss(rng);
          pts[static_cast<std::size_t>(i) * 2 + 1] = 0.5 - std::sin(t) + noise * gauss(rng);
          ds.labels[static_cast<std::size_t>(i)] = 1;
        }
      }
      break;
    }
    case SynthKind::PolyRegression: {
      ds.class_count = 0;
      std::vector<Real> targets(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Real z1 = uni(rng), z2 = uni(rng);
        pts[static_cast<std::size_t>(i) * 2] = z1;
        pts[static_cast<std::size_t>(i) * 2 + 1] = z2;
        targets[static_cast<std::size_t>(i)] = z1 * z1 + noise * gauss(rng);
      }
      ds.targets = Tensor(Shape{n, 1}, std::move(targets));
      break;
    }
  }
  ds.images = Tensor(Shape{n, 2}, std::move(pts));
  return ds;
}

// ---------------------------------------------------------------------------
// Procedural stand-in image set in the CIFAR-10 binary layout
// ---------------------------------------------------------------------------

namespace detail {

/// Renders one 32×32 RGB image of the given shape class with randomized
/// placement, scale and colors. Class identity is carried by shape alone so
/// the task cannot be solved from color statistics.
inline void render_shape_image(int cls, std::mt19937_64& rng, std::vector<Real>& out) {
  std::uniform_real_distribution<Real> uni(0.0, 1.0);
  const Real cx = 0.4 * (uni(rng) - 0.5) * 2.0;   // center offset in [-0.4, 0.4]
  const Real cy = 0.4 * (uni(rng) - 0.5) * 2.0;
  const Real scale = 0.55 + 0.4 * uni(rng);
  Real fg[3], bg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = 0.1 + 0.5 * uni(rng);
    fg[c] = bg[c] + 0.35 + 0.15 * uni(rng);  // guaranteed contrast
    if (fg[c] > 1.0) fg[c] = 1.0;
  }
  std::normal_distribution<Real> noise(0.0, 0.04);
  out.assign(3 * 32 * 32, 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const Real u = ((x + 0.5) / 16.0 - 1.0 - cx) / scale;
      const Real v = ((y + 0.5) / 16.0 - 1.0 - cy) / scale;
      const Real r = std::sqrt(u * u + v * v);
      bool on = false;
      switch (cls) {
        case 0: on = r <= 0.7; break;                                  // disc
        case 1: on = r >= 0.45 && r <= 0.75; break;                    // ring
        case 2: on = std::abs(u) <= 0.6 && std::abs(v) <= 0.6; break;  // square
        case 3:
          on = std::abs(u) <= 0.7 && std::abs(v) <= 0.7 &&
               !(std::abs(u) <= 0.4 && std::abs(v) <= 0.4);
          break;                                                        // frame
        case 4:
          on = (std::abs(u) <= 0.18 || std::abs(v) <= 0.18) && r <= 0.9;
          break;                                                        // plus
        case 5: on = std::abs(std::abs(u) - std::abs(v)) <= 0.18 && r <= 0.95; break;  // X
        case 6: on = static_cast<int>(std::floor((v + 2.0) * 2.5)) % 2 == 0 && r <= 1.0; break;
        case 7: on = static_cast<int>(std::floor((u + 2.0) * 2.5)) % 2 == 0 && r <= 1.0; break;
        case 8:
          on = (static_cast<int>(std::floor((u + 2.0) * 2.0)) +
                static_cast<int>(std::floor((v + 2.0) * 2.0))) % 2 ==
               0 && r <= 1.0;
          break;                                                        // checker
        default: on = v <= 0.6 && v >= 2.0 * std::abs(u) - 0.8; break;  // triangle
      }
      for (int c = 0; c < 3; ++c) {
        Real val = (on ? fg[c] : bg[c]) + noise(rng);
        val = std::min(1.0, std::max(0.0, val));
        out[(static_cast<std::size_t>(c) * 32 + y) * 32 + x] = val;
      }
    }
}

}  // namespace detail

/// Generates a balanced 10-class shape dataset and writes it bit-exactly in
/// the CIFAR-10 binary layout (data_batch_1..5.bin + test_batch.bin) under
/// `dir`. Desk-scale stand-in for environments without the real corpus.
inline void generate_shape_corpus(const std::string& dir, int train_per_batch, int test_count,
                                  std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto make_split = [&](int count, std::uint64_t idx) {
    auto rng = make_rng(seed, "shape_corpus", idx);
    std::vector<Real> pixels;
    pixels.reserve(static_cast<std::size_t>(count) * 3072);
    std::vector<int> labels(static_cast<std::size_t>(count));
    std::vector<Real> img;
    for (int i = 0; i < count; ++i) {
      const int cls = i % 10;
      labels[static_cast<std::size_t>(i)] = cls;
      detail::render_shape_image(cls, rng, img);
      pixels.insert(pixels.end(), img.begin(), img.end());
    }
    Dataset ds;
    ds.images = Tensor(Shape{count, 3, 32, 32}, std::move(pixels));
    ds.labels = std::move(labels);
    ds.class_count = 10;
    return ds;
  };
  for (int b = 1; b <= 5; ++b) {
    Dataset ds = make_split(train_per_batch, static_cast<std::uint64_t>(b));
    write_cifar10_binary((fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string(),
                         ds);
  }
  Dataset test = make_split(test_count, 99);
  write_cifar10_binary((fs::path(dir) / "test_batch.bin").string(), test);
}

// ---------------------------------------------------------------------------
// Batching helpers
// ---------------------------------------------------------------------------

inline Tensor gather_rows(const Tensor& data, const std::vector<int>& idx) {
  const std::int64_t stride = data.size() / data.dim(0);
  std::vector<Real> out(static_cast<std::size_t>(idx.size()) * stride);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(data.values().begin() + idx[i] * stride, stride,
                out.begin() + static_cast<std::int64_t>(i) * stride);
  Shape shape = data.shape();
  shape[0] = static_cast<int>(idx.size());
  return Tensor(std::move(shape), std::move(out));
}

inline std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[static_cast<std::size_t>(idx[i])];
  return out;
}

}  // namespace polynet
