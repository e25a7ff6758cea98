#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "genstereo/bytes.hpp"
#include "genstereo/coord_embed.hpp"
#include "genstereo/denoiser.hpp"
#include "genstereo/diffusion.hpp"
#include "genstereo/warp.hpp"

namespace genstereo {

using Json = nlohmann::json;

struct ScheduleConfig {
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct DropoutConfig {
  double fraction = 0.1;
  CombineMode mode = CombineMode::logical_and;
};

struct ModelConfig {
  std::size_t dim = 16;
  std::size_t frequencies = 4;
  bool include_raw = false;
  bool attention = true;
  Activation activation = Activation::silu;
};

// Switches mirroring the ablation rows: pixel loss is `alpha`, fusion is
// `fusion_enabled`, random drop is `dropout.fraction`.
struct AblationConfig {
  bool coord_embedding = true;
  bool warped_image = true;
  bool mixed_datasets = true;
};

struct TrainConfig {
  int steps = 500;
  std::size_t batch = 1;
  double lr = 2e-3;
  bool adam = true;
  bool cosine_decay = true;
  bool random_crop = true;
  bool joint = false;  // update fusion alongside the denoiser
  int fusion_steps = 200;
  double fusion_lr = 0.05;
  std::size_t fusion_samples = 4;  // generated samples used to fit fusion
  double resample_fraction = 0.1;
};

enum class DisparityFormat { pfm, png16 };

struct DatasetConfig {
  std::string name;
  std::filesystem::path root;
  DisparityFormat disparity = DisparityFormat::pfm;
  std::optional<std::size_t> size;  // overrides the counted sample total in the plan
};

struct Config {
  std::optional<double> gamma;
  std::vector<double> gamma_set;
  std::optional<std::pair<double, double>> gamma_range;
  std::size_t crop_size = 64;
  std::size_t codec_factor = 4;
  ScheduleConfig schedule;
  int sampler_steps = 20;
  bool sampler_warp_start = true;  // "sampler_init": "warp" | "noise"
  double alpha = 1.0;
  DropoutConfig dropout;
  bool fusion_enabled = true;
  std::uint64_t seed = 0;
  ModelConfig model;
  AblationConfig ablation;
  TrainConfig train;
  // dataset build
  std::vector<DatasetConfig> datasets;
  std::filesystem::path checkpoint;  // generator for mono corpora
  float max_disparity = 256.0f;
  std::size_t samples_per_dataset = 0;  // 0: every sample once per replication

  FourierOptions fourier() const { return {model.frequencies, model.include_raw}; }
  NoiseSchedule noise_schedule() const {
    return make_schedule(schedule.steps, schedule.beta_start, schedule.beta_end);
  }
  DenoiserShape denoiser_shape() const {
    DenoiserShape s;
    s.embed_channels = embedding_channels(fourier());
    s.dim = model.dim;
    s.attention = model.attention;
    s.activation = model.activation;
    return s;
  }
  double generation_gamma() const {
    if (gamma) return *gamma;
    if (!gamma_set.empty()) return gamma_set.front();
    if (gamma_range) return 0.5 * (gamma_range->first + gamma_range->second);
    fail(ErrorKind::domain, "config: no gamma, gamma_set or gamma_range given");
  }
  void validate() const;
};

namespace detail {

inline void check_gamma(double g, const char* what) {
  require(g >= 0.0 && g <= 1.0, ErrorKind::domain,
          std::string("config: ") + what + " must lie in [0,1]");
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline DisparityFormat parse_disparity_format(const std::string& s) {
  if (s == "pfm") return DisparityFormat::pfm;
  if (s == "png16") return DisparityFormat::png16;
  fail(ErrorKind::domain, "config: disparity format must be 'pfm' or 'png16', got '" + s + "'");
}

}  // namespace detail

inline void Config::validate() const {
  if (gamma) detail::check_gamma(*gamma, "gamma");
  for (double g : gamma_set) detail::check_gamma(g, "gamma_set entry");
  if (gamma_range) {
    detail::check_gamma(gamma_range->first, "gamma_range");
    detail::check_gamma(gamma_range->second, "gamma_range");
    require(gamma_range->first <= gamma_range->second, ErrorKind::domain,
            "config: gamma_range lower bound exceeds upper bound");
  }
  require(crop_size >= 2, ErrorKind::domain, "config: crop_size must be >= 2");
  require(codec_factor >= 1, ErrorKind::domain, "config: codec_factor must be >= 1");
  require(crop_size % codec_factor == 0, ErrorKind::domain,
          "config: crop_size must be divisible by codec_factor");
  require(schedule.steps >= 1, ErrorKind::domain, "config: schedule.T must be >= 1");
  require(sampler_steps >= 1 && sampler_steps <= schedule.steps, ErrorKind::domain,
          "config: sampler_steps must lie in [1, T]");
  require(alpha >= 0.0, ErrorKind::domain, "config: alpha must be >= 0");
  require(dropout.fraction >= 0.0 && dropout.fraction <= 1.0, ErrorKind::domain,
          "config: dropout.fraction must lie in [0,1]");
  require(train.batch >= 1, ErrorKind::domain, "config: train.batch must be >= 1");
  require(train.steps >= 0 && train.fusion_steps >= 0, ErrorKind::domain,
          "config: step counts must be >= 0");
  require(train.resample_fraction > 0.0 && train.resample_fraction <= 1.0, ErrorKind::domain,
          "config: train.resample_fraction must lie in (0,1]");
  require(model.dim >= 1 && model.frequencies >= 1, ErrorKind::domain,
          "config: model.dim and model.frequencies must be >= 1");
}

inline Config config_from_json(const Json& j) {
  Config c;
  try {
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    detail::read_opt(j, "gamma_set", c.gamma_set);
    if (j.contains("gamma_range")) {
      const auto r = j.at("gamma_range").get<std::vector<double>>();
      require(r.size() == 2, ErrorKind::format, "config: gamma_range needs [lo, hi]");
      c.gamma_range = std::pair{r[0], r[1]};
    }
    detail::read_opt(j, "crop_size", c.crop_size);
    detail::read_opt(j, "codec_factor", c.codec_factor);
    if (j.contains("schedule")) {
      const Json& s = j.at("schedule");
      detail::read_opt(s, "T", c.schedule.steps);
      detail::read_opt(s, "beta_start", c.schedule.beta_start);
      detail::read_opt(s, "beta_end", c.schedule.beta_end);
    }
    detail::read_opt(j, "sampler_steps", c.sampler_steps);
    if (j.contains("sampler_init")) {
      const auto v = j.at("sampler_init").get<std::string>();
      require(v == "warp" || v == "noise", ErrorKind::domain,
              "config: sampler_init must be 'warp' or 'noise'");
      c.sampler_warp_start = v == "warp";
    }
    detail::read_opt(j, "alpha", c.alpha);
    if (j.contains("dropout")) {
      const Json& d = j.at("dropout");
      detail::read_opt(d, "fraction", c.dropout.fraction);
      if (d.contains("mode")) c.dropout.mode = parse_combine_mode(d.at("mode").get<std::string>());
    }
    if (j.contains("fusion")) detail::read_opt(j.at("fusion"), "enabled", c.fusion_enabled);
    detail::read_opt(j, "seed", c.seed);
    if (j.contains("model")) {
      const Json& m = j.at("model");
      detail::read_opt(m, "dim", c.model.dim);
      detail::read_opt(m, "frequencies", c.model.frequencies);
      detail::read_opt(m, "include_raw", c.model.include_raw);
      detail::read_opt(m, "attention", c.model.attention);
      if (m.contains("activation"))
        c.model.activation = parse_activation(m.at("activation").get<std::string>());
    }
    if (j.contains("ablation")) {
      const Json& a = j.at("ablation");
      detail::read_opt(a, "coord_embedding", c.ablation.coord_embedding);
      detail::read_opt(a, "warped_image", c.ablation.warped_image);
      detail::read_opt(a, "mixed_datasets", c.ablation.mixed_datasets);
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      detail::read_opt(t, "steps", c.train.steps);
      detail::read_opt(t, "batch", c.train.batch);
      detail::read_opt(t, "lr", c.train.lr);
      if (t.contains("optimizer")) {
        const auto o = t.at("optimizer").get<std::string>();
        require(o == "adam" || o == "sgd", ErrorKind::domain,
                "config: train.optimizer must be 'adam' or 'sgd'");
        c.train.adam = o == "adam";
      }
      detail::read_opt(t, "cosine_decay", c.train.cosine_decay);
      detail::read_opt(t, "random_crop", c.train.random_crop);
      detail::read_opt(t, "joint", c.train.joint);
      detail::read_opt(t, "fusion_steps", c.train.fusion_steps);
      detail::read_opt(t, "fusion_lr", c.train.fusion_lr);
      detail::read_opt(t, "fusion_samples", c.train.fusion_samples);
      detail::read_opt(t, "resample_fraction", c.train.resample_fraction);
    }
    if (j.contains("datasets")) {
      for (const Json& d : j.at("datasets")) {
        DatasetConfig dc;
        dc.root = d.at("root").get<std::string>();
        dc.name = d.value("name", dc.root.filename().string());
        if (d.contains("disparity"))
          dc.disparity = detail::parse_disparity_format(d.at("disparity").get<std::string>());
        if (d.contains("size")) dc.size = d.at("size").get<std::size_t>();
        c.datasets.push_back(std::move(dc));
      }
    }
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    detail::read_opt(j, "max_disparity", c.max_disparity);
    detail::read_opt(j, "samples_per_dataset", c.samples_per_dataset);
  } catch (const Json::exception& e) {
    fail(ErrorKind::format, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline Json config_to_json(const Config& c) {
  Json j;
  if (c.gamma) j["gamma"] = *c.gamma;
  if (!c.gamma_set.empty()) j["gamma_set"] = c.gamma_set;
  if (c.gamma_range) j["gamma_range"] = {c.gamma_range->first, c.gamma_range->second};
  j["crop_size"] = c.crop_size;
  j["codec_factor"] = c.codec_factor;
  j["schedule"] = {{"T", c.schedule.steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end}};
  j["sampler_steps"] = c.sampler_steps;
  j["sampler_init"] = c.sampler_warp_start ? "warp" : "noise";
  j["alpha"] = c.alpha;
  j["dropout"] = {{"fraction", c.dropout.fraction}, {"mode", to_string(c.dropout.mode)}};
  j["fusion"] = {{"enabled", c.fusion_enabled}};
  j["seed"] = c.seed;
  j["model"] = {{"dim", c.model.dim},
                {"frequencies", c.model.frequencies},
                {"include_raw", c.model.include_raw},
                {"attention", c.model.attention},
                {"activation", to_string(c.model.activation)}};
  j["ablation"] = {{"coord_embedding", c.ablation.coord_embedding},
                   {"warped_image", c.ablation.warped_image},
                   {"mixed_datasets", c.ablation.mixed_datasets}};
  j["train"] = {{"steps", c.train.steps},
                {"batch", c.train.batch},
                {"lr", c.train.lr},
                {"optimizer", c.train.adam ? "adam" : "sgd"},
                {"cosine_decay", c.train.cosine_decay},
                {"random_crop", c.train.random_crop},
                {"joint", c.train.joint},
                {"fusion_steps", c.train.fusion_steps},
                {"fusion_lr", c.train.fusion_lr},
                {"fusion_samples", c.train.fusion_samples},
                {"resample_fraction", c.train.resample_fraction}};
  return j;
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::format, what + ": " + e.what());
  }
}

inline Config load_config(const std::filesystem::path& path) {
  return config_from_json(parse_json(read_text(path), path.string()));
}

}  // namespace genstereo
