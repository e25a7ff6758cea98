#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genstereo/config.hpp"
#include "genstereo/pfm.hpp"
#include "genstereo/png_io.hpp"
#include "genstereo/resample.hpp"
#include "genstereo/rng.hpp"

namespace genstereo {

struct SamplePlan {
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> replication;
  double fraction = 0.1;

  std::size_t total() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) n += sizes[k] * replication[k];
    return n;
  }
};

/// Replicates every dataset smaller than fraction * largest until it reaches
/// that count; larger datasets are used once.
inline SamplePlan resample_plan(const std::vector<std::size_t>& sizes, double fraction,
                                std::vector<std::string> names = {}) {
  require(!sizes.empty(), ErrorKind::domain, "resample_plan: empty dataset list");
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::domain,
          "resample_plan: fraction must lie in (0,1]");
  for (std::size_t s : sizes) require(s >= 1, ErrorKind::domain, "resample_plan: dataset size 0");
  if (names.empty())
    for (std::size_t k = 0; k < sizes.size(); ++k) names.push_back("dataset" + std::to_string(k));
  require(names.size() == sizes.size(), ErrorKind::shape, "resample_plan: names/sizes mismatch");

  SamplePlan plan{std::move(names), sizes, {}, fraction};
  const double threshold = fraction * static_cast<double>(*std::max_element(sizes.begin(), sizes.end()));
  for (std::size_t s : sizes) {
    // relative slack absorbs representation error in fraction * max (0.1 * 306000)
    const double r = std::ceil(threshold / static_cast<double>(s) * (1.0 - 1e-12));
    plan.replication.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(r)));
  }
  return plan;
}

inline Json plan_to_json(const SamplePlan& p) {
  Json datasets = Json::array();
  for (std::size_t k = 0; k < p.sizes.size(); ++k)
    datasets.push_back({{"name", p.names[k]},
                        {"size", p.sizes[k]},
                        {"replication", p.replication[k]},
                        {"samples", p.sizes[k] * p.replication[k]}});
  return {{"fraction", p.fraction}, {"datasets", datasets}, {"total", p.total()}};
}

// ---------------------------------------------------------------------------

struct CropWindow {
  std::size_t top = 0, left = 0, side = 0;
};

/// Square crop with side uniform in [min/2, min] and uniform position.
inline CropWindow draw_crop(std::size_t h, std::size_t w, std::uint64_t seed) {
  const std::size_t m = std::min(h, w);
  Rng rng(seed);
  CropWindow c;
  c.side = rng.integer((m + 1) / 2, m);
  c.top = rng.integer(0, h - c.side);
  c.left = rng.integer(0, w - c.side);
  return c;
}

/// Largest centered square.
inline CropWindow full_crop(std::size_t h, std::size_t w) {
  const std::size_t m = std::min(h, w);
  return {(h - m) / 2, (w - m) / 2, m};
}

inline Image crop(const Image& img, const CropWindow& c) {
  require(c.top + c.side <= img.height && c.left + c.side <= img.width, ErrorKind::domain,
          "crop: window exceeds the image");
  Image out(c.side, c.side, img.channels);
  for (std::size_t i = 0; i < c.side; ++i)
    for (std::size_t j = 0; j < c.side; ++j)
      for (std::size_t k = 0; k < img.channels; ++k)
        out(i, j, k) = img(c.top + i, c.left + j, k);
  return out;
}

inline Disparity crop(const Disparity& d, const CropWindow& c) {
  require(c.top + c.side <= d.height && c.left + c.side <= d.width, ErrorKind::domain,
          "crop: window exceeds the disparity map");
  Disparity out(c.side, c.side);
  for (std::size_t i = 0; i < c.side; ++i)
    for (std::size_t j = 0; j < c.side; ++j) {
      if (d.is_valid(c.top + i, c.left + j))
        out(i, j) = d(c.top + i, c.left + j);
      else
        out.invalidate(i, j);
    }
  return out;
}

inline constexpr std::size_t kMinPrepareSide = 32;

struct PreparedSample {
  Image left;
  std::optional<Image> right;
  Disparity disparity;
  CropWindow window;
};

/// Crops left (and right, when present) and the disparity with one window,
/// then resizes to S x S. Disparity values scale by S / side.
inline PreparedSample prepare_sample(const Image& left, const std::optional<Image>& right,
                                     const Disparity& d, std::size_t S,
                                     const CropWindow& window) {
  require(left.height == d.height && left.width == d.width, ErrorKind::shape,
          "prepare_sample: image and disparity dims differ");
  if (right)
    require(right->same_shape(left), ErrorKind::shape, "prepare_sample: left/right dims differ");
  PreparedSample out;
  out.window = window;
  out.left = resize_bilinear(crop(left, window), S, S);
  if (right) out.right = resize_bilinear(crop(*right, window), S, S);
  out.disparity = disparity_rescale(crop(d, window), S, S);
  return out;
}

inline PreparedSample prepare_sample(const Image& left, const std::optional<Image>& right,
                                     const Disparity& d, std::size_t S, std::uint64_t seed,
                                     bool random_crop = true) {
  require(std::min(left.height, left.width) >= kMinPrepareSide, ErrorKind::domain,
          "prepare_sample: image smaller than " + std::to_string(kMinPrepareSide) + " px");
  const CropWindow w = random_crop ? draw_crop(left.height, left.width, seed)
                                   : full_crop(left.height, left.width);
  return prepare_sample(left, right, d, S, w);
}

// ---------------------------------------------------------------------------
// Directory adapter: <root>/left/<stem>.png, optional <root>/right/<stem>.png,
// <root>/disp/<stem>.pfm (or 16-bit .png, value/256).

struct StereoSample {
  std::string stem;
  Image left;
  std::optional<Image> right;
  Disparity disparity;
};

struct DatasetSpec {
  std::string name;
  std::filesystem::path root;
  DisparityFormat disparity = DisparityFormat::pfm;
  std::vector<std::string> stems;
  bool paired = false;  // right views present
  std::size_t size() const { return stems.size(); }
};

inline Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (std::size_t p = 0; p < img.pixels(); ++p)
    for (std::size_t k = 0; k < 3; ++k) out.values[p * 3 + k] = img.values[p];
  return out;
}

inline Disparity read_disparity(const std::filesystem::path& path) {
  if (path.extension() == ".png") return read_png_disparity16(path);
  return Disparity::from_tensor(pfm_read(read_file(path)));
}

inline void write_disparity(const std::filesystem::path& path, const Disparity& d) {
  if (path.extension() == ".png") return write_png_disparity16(path, d);
  // invalid pixels are stored as +inf, the Middlebury convention
  Tensor t = d.to_tensor();
  for (std::size_t k = 0; k < t.size(); ++k)
    if (!d.valid.values[k]) t[k] = std::numeric_limits<float>::infinity();
  write_file(path, pfm_write(t));
}

inline std::vector<std::string> list_stems(const std::filesystem::path& dir,
                                           const std::string& ext) {
  require(std::filesystem::is_directory(dir), ErrorKind::io, "not a directory: " + dir.string());
  std::vector<std::string> stems;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

inline DatasetSpec scan_dataset(const DatasetConfig& c) {
  DatasetSpec s{c.name, c.root, c.disparity, list_stems(c.root / "left", ".png"), false};
  require(!s.stems.empty(), ErrorKind::degenerate,
          "dataset " + c.name + ": no left images under " + (c.root / "left").string());
  s.paired = std::filesystem::is_directory(c.root / "right");
  const char* dext = c.disparity == DisparityFormat::png16 ? ".png" : ".pfm";
  for (const auto& stem : s.stems) {
    require(std::filesystem::exists(c.root / "disp" / (stem + dext)), ErrorKind::io,
            "dataset " + c.name + ": missing disparity for " + stem);
    if (s.paired)
      require(std::filesystem::exists(c.root / "right" / (stem + ".png")), ErrorKind::io,
              "dataset " + c.name + ": missing right view for " + stem);
  }
  return s;
}

inline StereoSample load_sample(const DatasetSpec& s, std::size_t index) {
  require(index < s.size(), ErrorKind::domain, "dataset " + s.name + ": index out of range");
  const std::string& stem = s.stems[index];
  StereoSample out;
  out.stem = stem;
  out.left = to_rgb(read_png(s.root / "left" / (stem + ".png")));
  if (s.paired) out.right = to_rgb(read_png(s.root / "right" / (stem + ".png")));
  const char* dext = s.disparity == DisparityFormat::png16 ? ".png" : ".pfm";
  out.disparity = read_disparity(s.root / "disp" / (stem + dext));
  require(out.disparity.height == out.left.height && out.disparity.width == out.left.width,
          ErrorKind::shape, "dataset " + s.name + ": disparity dims differ for " + stem);
  return out;
}

inline void save_sample(const std::filesystem::path& root, const std::string& stem,
                        const Image& left, const Image* right, const Disparity& d) {
  write_png(root / "left" / (stem + ".png"), left);
  if (right) write_png(root / "right" / (stem + ".png"), *right);
  write_disparity(root / "disp" / (stem + ".pfm"), d);
}

/// A directory that has left/ is one dataset; otherwise every subdirectory
/// with left/ is. Disparity format follows the first file found.
inline std::vector<DatasetConfig> discover_datasets(const std::filesystem::path& dir) {
  auto make = [](const std::filesystem::path& root) {
    DatasetConfig c;
    c.root = root;
    c.name = root.filename().string();
    const auto stems = list_stems(root / "left", ".png");
    if (!stems.empty() && !std::filesystem::exists(root / "disp" / (stems.front() + ".pfm")) &&
        std::filesystem::exists(root / "disp" / (stems.front() + ".png")))
      c.disparity = DisparityFormat::png16;
    return c;
  };
  require(std::filesystem::is_directory(dir), ErrorKind::io, "not a directory: " + dir.string());
  if (std::filesystem::is_directory(dir / "left")) return {make(dir)};
  std::vector<std::filesystem::path> roots;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && std::filesystem::is_directory(e.path() / "left")) roots.push_back(e.path());
  std::sort(roots.begin(), roots.end());
  require(!roots.empty(), ErrorKind::degenerate, "no datasets (left/ folders) under " + dir.string());
  std::vector<DatasetConfig> out;
  for (const auto& r : roots) out.push_back(make(r));
  return out;
}

}  // namespace genstereo
