#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "genstereo/config.hpp"
#include "genstereo/denoiser.hpp"
#include "genstereo/fusion.hpp"
#include "genstereo/gst.hpp"

namespace genstereo {

/// Everything generation needs besides the per-call settings.
struct Model {
  DenoiserParams denoiser;
  FusionParams fusion;
  FourierOptions fourier;
  std::size_t codec_factor = 4;
  ScheduleConfig schedule;
};

inline Model make_model(const Config& c, std::uint64_t seed) {
  Model m;
  m.denoiser = DenoiserParams::initialized(c.denoiser_shape(), seed);
  m.fourier = c.fourier();
  m.codec_factor = c.codec_factor;
  m.schedule = c.schedule;
  return m;
}

inline NoiseSchedule noise_schedule(const Model& m) {
  return make_schedule(m.schedule.steps, m.schedule.beta_start, m.schedule.beta_end);
}

namespace detail {

inline constexpr const char* kManifest = "manifest.json";

template <class Params>
void save_tensors(const Params& p, const std::filesystem::path& dir, Json& list) {
  p.visit([&](const std::string& name, const std::vector<double>& v) {
    Tensor t({v.size()});
    for (std::size_t k = 0; k < v.size(); ++k) t[k] = static_cast<float>(v[k]);
    const std::string file = name + ".gst";
    write_file(dir / file, gst_encode(t));
    list.push_back({{"name", name}, {"file", file}, {"dims", t.dims()}});
  });
}

inline std::map<std::string, std::string> tensor_files(const Json& manifest) {
  std::map<std::string, std::string> files;
  for (const Json& e : manifest.at("tensors"))
    files[e.at("name").get<std::string>()] = e.at("file").get<std::string>();
  return files;
}

template <class Params>
void load_tensors(Params& p, const std::filesystem::path& dir,
                  const std::map<std::string, std::string>& files) {
  p.visit([&](const std::string& name, std::vector<double>& v) {
    const auto it = files.find(name);
    require(it != files.end(), ErrorKind::format, "checkpoint: missing tensor '" + name + "'");
    const Tensor t = gst_decode(read_file(dir / it->second));
    require(t.size() == v.size(), ErrorKind::shape,
            "checkpoint: tensor '" + name + "' has " + std::to_string(t.size()) +
                " values, expected " + std::to_string(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = t[k];
  });
}

inline Json read_manifest(const std::filesystem::path& dir) {
  return parse_json(read_text(dir / kManifest), (dir / kManifest).string());
}

}  // namespace detail

/// Writes one GST1 file per parameter tensor plus manifest.json naming them.
inline void save_model(const Model& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json tensors = Json::array();
  detail::save_tensors(m.denoiser, dir, tensors);
  detail::save_tensors(m.fusion, dir, tensors);
  const DenoiserShape& s = m.denoiser.shape;
  Json manifest = {
      {"format", "genstereo-checkpoint"},
      {"version", 1},
      {"model",
       {{"latent_channels", s.latent_channels},
        {"cond_channels", s.cond_channels},
        {"embed_channels", s.embed_channels},
        {"ref_channels", s.ref_channels},
        {"dim", s.dim},
        {"activation", to_string(s.activation)},
        {"attention", s.attention},
        {"frequencies", m.fourier.frequencies},
        {"include_raw", m.fourier.include_raw},
        {"codec_factor", m.codec_factor},
        {"schedule",
         {{"T", m.schedule.steps},
          {"beta_start", m.schedule.beta_start},
          {"beta_end", m.schedule.beta_end}}}}},
      {"tensors", tensors}};
  write_text(dir / detail::kManifest, manifest.dump(2) + "\n");
}

inline Model load_model(const std::filesystem::path& dir) {
  const Json manifest = detail::read_manifest(dir);
  Model m;
  try {
    require(manifest.at("format") == "genstereo-checkpoint", ErrorKind::format,
            "checkpoint: unknown manifest format");
    const Json& j = manifest.at("model");
    DenoiserShape s;
    s.latent_channels = j.at("latent_channels");
    s.cond_channels = j.at("cond_channels");
    s.embed_channels = j.at("embed_channels");
    s.ref_channels = j.at("ref_channels");
    s.dim = j.at("dim");
    s.activation = parse_activation(j.at("activation"));
    s.attention = j.at("attention");
    m.fourier.frequencies = j.at("frequencies");
    m.fourier.include_raw = j.at("include_raw");
    require(embedding_channels(m.fourier) == s.embed_channels, ErrorKind::format,
            "checkpoint: embedding channels disagree with the Fourier settings");
    m.codec_factor = j.at("codec_factor");
    m.schedule.steps = j.at("schedule").at("T");
    m.schedule.beta_start = j.at("schedule").at("beta_start");
    m.schedule.beta_end = j.at("schedule").at("beta_end");
    m.denoiser = DenoiserParams(s);
  } catch (const Json::exception& e) {
    fail(ErrorKind::format, "checkpoint manifest: " + std::string(e.what()));
  }
  const auto files = detail::tensor_files(manifest);
  detail::load_tensors(m.denoiser, dir, files);
  detail::load_tensors(m.fusion, dir, files);
  return m;
}

/// Fusion parameters only; accepts any checkpoint directory.
inline FusionParams load_fusion(const std::filesystem::path& dir) {
  FusionParams p;
  try {
    detail::load_tensors(p, dir, detail::tensor_files(detail::read_manifest(dir)));
  } catch (const Json::exception& e) {
    fail(ErrorKind::format, "checkpoint manifest: " + std::string(e.what()));
  }
  return p;
}

inline void save_fusion(const FusionParams& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json tensors = Json::array();
  detail::save_tensors(p, dir, tensors);
  write_text(dir / detail::kManifest,
             Json{{"format", "genstereo-fusion"}, {"version", 1}, {"tensors", tensors}}.dump(2) +
                 "\n");
}

}  // namespace genstereo
