// genstereo command-line front end.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "genstereo/genstereo.hpp"

namespace fs = std::filesystem;
using namespace genstereo;

namespace {

Image read_image(const fs::path& p) {
  if (p.extension() == ".pfm") {
    Image img = Image::from_tensor(pfm_read(read_file(p)));
    img.clamp01();
    return img;
  }
  return read_png(p);
}

void write_image(const fs::path& p, const Image& img) {
  if (p.extension() == ".pfm")
    write_file(p, pfm_write(img.to_tensor()));
  else
    write_png(p, img);
}

std::vector<fs::path> files_with(const fs::path& dir, std::initializer_list<const char*> exts) {
  require(fs::is_directory(dir), ErrorKind::io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    for (const char* x : exts)
      if (e.path().extension() == x) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  require(!out.empty(), ErrorKind::degenerate, "no input files in " + dir.string());
  return out;
}

fs::path counterpart(const fs::path& dir, const fs::path& file, std::initializer_list<const char*> exts) {
  for (const char* x : exts) {
    fs::path p = dir / file.filename();
    p.replace_extension(x);
    if (fs::exists(p)) return p;
  }
  fail(ErrorKind::io, "no counterpart for " + file.filename().string() + " in " + dir.string());
}

void write_report(const fs::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
  for (const auto& a : j.at("aggregate"))
    std::printf("%-10s %.6f  (-%.6f / +%.6f, n=%d)\n", a.at("metric").get<std::string>().c_str(),
                a.at("value").get<double>(), a.at("minus").get<double>(), a.at("plus").get<double>(),
                a.at("count").get<int>());
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    require(pos == item.size() && pos > 0 && v >= 0, ErrorKind::format, "--sizes: bad entry '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// --- subcommands ----------------------------------------------------------

struct WarpArgs {
  fs::path left, disp, out, mask_out;
  double gamma = 0.0;
};

void run_warp(const WarpArgs& a) {
  const Image left = read_image(a.left);
  const Disparity d = scale_disparity(read_disparity(a.disp), a.gamma);
  const ImageWarp w = warp_image(left, d);
  write_image(a.out, w.image);
  write_mask_png(a.mask_out, w.mask);
  std::printf("warped %zux%zu, valid %.4f\n", left.width, left.height, w.mask.mean());
}

struct GenerateArgs {
  fs::path left, disp, config, checkpoint, out, mask_out, warp_out;
  std::optional<std::uint64_t> seed;
};

void run_generate(const GenerateArgs& a) {
  const Config c = load_config(a.config);
  const Model m = load_model(a.checkpoint);
  GenSettings g = GenSettings::from(c);
  if (a.seed) g.seed = *a.seed;
  const Generation r = generate_right_view(to_rgb(read_image(a.left)), read_disparity(a.disp), g, m);
  write_image(a.out, r.right);
  if (!a.mask_out.empty()) write_mask_png(a.mask_out, r.mask);
  if (!a.warp_out.empty()) write_image(a.warp_out, r.warped);
  std::printf("generated %zux%zu (gamma %.4g, K=%d, seed %llu, valid %.4f)\n", r.right.width,
              r.right.height, g.gamma, g.sampler_steps, static_cast<unsigned long long>(g.seed),
              r.mask.mean());
}

struct FuseArgs {
  fs::path gen, warp, mask, params, out;
};

void run_fuse(const FuseArgs& a) {
  const Image gen = to_rgb(read_image(a.gen)), warp = to_rgb(read_image(a.warp));
  const Mask m = read_mask_png(a.mask);
  const FusionParams p = load_fusion(a.params);
  write_image(a.out, fuse(gen, warp, m, fusion_weights(gen, warp, m, p)));
}

struct TrainArgs {
  fs::path config, data, out;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  Config c = load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  const auto sets = load_train_sets(discover_datasets(a.data));
  const int every = std::max(1, c.train.steps / 10);
  const TrainResult r = train_toy(sets, c, {[&](int step, const LossReport& l) {
    if (step % every == 0 || step + 1 == c.train.steps)
      std::printf("step %5d  total %.5f  latent %.5f  pixel %.5f\n", step, l.total, l.latent, l.pixel);
  }});
  save_model(r.model, a.out);
  write_text(a.out / "loss.csv", loss_csv(r));
  std::string fl = "step,loss\n";
  for (std::size_t k = 0; k < r.fusion_loss.size(); ++k)
    fl += std::to_string(k) + "," + Json(r.fusion_loss[k]).dump() + "\n";
  write_text(a.out / "fusion_loss.csv", fl);
  Json summary = {{"config", config_to_json(c)},
                  {"plan", plan_to_json(r.plan)},
                  {"steps", r.loss.size()},
                  {"dropout_count", r.dropout_count()},
                  {"dropout_steps", r.dropout_steps}};
  if (!r.loss.empty()) summary["final_loss"] = r.loss.back().total;
  write_text(a.out / "train.json", summary.dump(2) + "\n");
  std::printf("saved checkpoint to %s\n", a.out.string().c_str());
}

struct EvalGenArgs {
  fs::path pred, ref, report, external;
};

void run_eval_gen(const EvalGenArgs& a) {
  std::vector<ImagePair> pairs;
  for (const auto& p : files_with(a.pred, {".png", ".pfm"}))
    pairs.push_back({p.filename().string(), read_image(p), read_image(counterpart(a.ref, p, {".png", ".pfm"}))});
  EvalReport r = eval_generation(pairs);
  if (!a.external.empty()) attach_external(r, parse_json(read_text(a.external), a.external.string()));
  write_report(a.report, report_to_json(r));
}

struct EvalStereoArgs {
  fs::path pred, gt, report;
  std::string mode = "and";
};

void run_eval_stereo(const EvalStereoArgs& a) {
  std::vector<DisparityPair> pairs;
  for (const auto& p : files_with(a.pred, {".pfm", ".png"}))
    pairs.push_back({p.filename().string(), read_disparity(p),
                     read_disparity(counterpart(a.gt, p, {".pfm", ".png"}))});
  const D1Mode mode = parse_combine_mode(a.mode) == CombineMode::logical_and ? D1Mode::both : D1Mode::either;
  write_report(a.report, report_to_json(eval_stereo(pairs, mode)));
}

void run_plan(const std::string& sizes, double fraction) {
  std::cout << plan_to_json(resample_plan(parse_sizes(sizes), fraction)).dump(2) << "\n";
}

// Materializes the plan: every replicated sample is cropped and resized with
// its own seed. Datasets without right views are completed by the generator
// named in the config, with gamma drawn per sample.
void run_build(const fs::path& config, const fs::path& out) {
  const Config c = load_config(config);
  require(!c.datasets.empty(), ErrorKind::domain, "dataset build: config lists no datasets");
  std::vector<DatasetSpec> specs;
  std::vector<std::size_t> sizes;
  std::vector<std::string> names;
  for (const auto& dc : c.datasets) {
    specs.push_back(scan_dataset(dc));
    sizes.push_back(dc.size.value_or(specs.back().size()));
    names.push_back(dc.name);
  }
  const SamplePlan plan = resample_plan(sizes, c.train.resample_fraction, names);
  std::optional<Model> model;
  Rng gamma_rng(mix_seed(c.seed, 0x6a));
  auto draw_gamma = [&]() {
    if (!c.gamma_set.empty()) return c.gamma_set[gamma_rng.integer(0, c.gamma_set.size() - 1)];
    if (c.gamma_range) return gamma_rng.uniform(c.gamma_range->first, c.gamma_range->second);
    return c.generation_gamma();
  };

  Json manifest = Json::array();
  std::uint64_t index = 0;
  for (std::size_t d = 0; d < specs.size(); ++d) {
    const DatasetSpec& s = specs[d];
    std::size_t written = 0;
    for (std::size_t r = 0; r < plan.replication[d]; ++r)
      for (std::size_t n = 0; n < s.size(); ++n) {
        if (c.samples_per_dataset > 0 && written == c.samples_per_dataset) break;
        const std::uint64_t seed = mix_seed(c.seed, index++);
        const StereoSample src = load_sample(s, n);
        const PreparedSample p =
            prepare_sample(src.left, src.right, src.disparity, c.crop_size, seed, c.train.random_crop);
        const std::string stem = src.stem + "_r" + std::to_string(r);
        Json entry = {{"dataset", s.name}, {"source", src.stem}, {"stem", stem}, {"replica", r},
                      {"crop", {p.window.top, p.window.left, p.window.side}}};
        if (p.right) {
          save_sample(out / s.name, stem, p.left, &*p.right, p.disparity);
        } else {
          require(!c.checkpoint.empty(), ErrorKind::domain,
                  "dataset " + s.name + " has no right views; set \"checkpoint\" in the config");
          if (!model) model = load_model(c.checkpoint);
          GenSettings g = GenSettings::from(c);
          g.gamma = draw_gamma();
          g.seed = seed;
          const Generation gen = generate_right_view(p.left, p.disparity, g, *model);
          save_sample(out / s.name, stem, p.left, &gen.right,
                      clamp_disparity(gen.disparity, c.max_disparity));
          write_mask_png(out / s.name / "mask" / (stem + ".png"), gen.mask);
          entry["gamma"] = g.gamma;
        }
        manifest.push_back(entry);
        ++written;
      }
  }
  write_text(out / "plan.json",
             Json{{"plan", plan_to_json(plan)}, {"samples", manifest}}.dump(2) + "\n");
  std::printf("wrote %zu samples to %s\n", manifest.size(), out.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genstereo: disparity-conditioned stereo synthesis toolkit"};
  app.require_subcommand(1);

  WarpArgs wa;
  auto* warp = app.add_subcommand("warp", "forward-warp a left view by a scaled disparity map");
  warp->add_option("--left", wa.left, "left image (.png/.pfm)")->required();
  warp->add_option("--disp", wa.disp, "disparity (.pfm, or 16-bit .png at value/256)")->required();
  warp->add_option("--gamma", wa.gamma, "scale: max disparity becomes gamma * width")->required();
  warp->add_option("--out", wa.out, "warped image")->required();
  warp->add_option("--mask-out", wa.mask_out, "validity mask png")->required();

  GenerateArgs ga;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "synthesize the right view");
  gen->add_option("--left", ga.left)->required();
  gen->add_option("--disp", ga.disp)->required();
  gen->add_option("--config", ga.config)->required();
  gen->add_option("--checkpoint", ga.checkpoint)->required();
  gen->add_option("--out", ga.out)->required();
  gen->add_option("--mask-out", ga.mask_out, "optional validity mask");
  gen->add_option("--warp-out", ga.warp_out, "optional warped image");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "override the config seed");

  FuseArgs fa;
  auto* fz = app.add_subcommand("fuse", "blend generated and warped views");
  fz->add_option("--gen", fa.gen)->required();
  fz->add_option("--warp", fa.warp)->required();
  fz->add_option("--mask", fa.mask)->required();
  fz->add_option("--params", fa.params, "checkpoint directory with fusion tensors")->required();
  fz->add_option("--out", fa.out)->required();

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* tr = app.add_subcommand("train-toy", "train the toy denoiser and fusion layer");
  tr->add_option("--config", ta.config)->required();
  tr->add_option("--data", ta.data, "dataset dir (left/ right/ disp/) or a dir of them")->required();
  tr->add_option("--out", ta.out, "checkpoint directory")->required();
  auto* train_seed_opt = tr->add_option("--seed", train_seed);

  EvalGenArgs ea;
  auto* eg = app.add_subcommand("eval-gen", "PSNR / SSIM of generated views");
  eg->add_option("--pred", ea.pred)->required();
  eg->add_option("--ref", ea.ref)->required();
  eg->add_option("--report", ea.report)->required();
  eg->add_option("--external", ea.external, "precomputed per-pair scores, e.g. LPIPS");

  EvalStereoArgs es;
  auto* est = app.add_subcommand("eval-stereo", "EPE / D1-all / bad-pixel rates");
  est->add_option("--pred", es.pred)->required();
  est->add_option("--gt", es.gt)->required();
  est->add_option("--mode", es.mode, "D1 rule")->check(CLI::IsMember({"and", "or"}))->required();
  est->add_option("--report", es.report)->required();

  auto* ds = app.add_subcommand("dataset", "mixed-dataset planning and preparation");
  ds->require_subcommand(1);
  std::string sizes;
  double fraction = 0.1;
  auto* plan = ds->add_subcommand("plan", "replication counts for dataset sizes");
  plan->add_option("--sizes", sizes, "comma-separated sample counts")->required();
  plan->add_option("--fraction", fraction)->required();
  fs::path build_config, build_out;
  auto* build = ds->add_subcommand("build", "crop/resize (and complete) datasets per the plan");
  build->add_option("--config", build_config)->required();
  build->add_option("--out", build_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*warp) run_warp(wa);
    if (*gen) {
      if (*gen_seed_opt) ga.seed = gen_seed;
      run_generate(ga);
    }
    if (*fz) run_fuse(fa);
    if (*tr) {
      if (*train_seed_opt) ta.seed = train_seed;
      run_train(ta);
    }
    if (*eg) run_eval_gen(ea);
    if (*est) run_eval_stereo(es);
    if (*plan) run_plan(sizes, fraction);
    if (*build) run_build(build_config, build_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
