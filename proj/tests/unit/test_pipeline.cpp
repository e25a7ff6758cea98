#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "genstereo/genstereo.hpp"
#include "test_support.hpp"

using namespace genstereo;
using genstereo::testing::random_image;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("genstereo_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small, fast configuration for plumbing tests.
Config tiny_config() {
  Config c;
  c.gamma = 0.125;
  c.crop_size = 32;
  c.codec_factor = 4;
  c.model.dim = 4;
  c.model.frequencies = 2;
  c.sampler_steps = 5;
  c.train.steps = 20;
  c.train.fusion_steps = 10;
  c.train.fusion_samples = 1;
  c.train.random_crop = false;
  return c;
}

std::vector<TrainSet> scene_set(std::size_t size = 32) {
  const StereoScene s = default_scene(size);
  return {{"scene", {{"s0", s.left(), s.right(), s.disparity()}}}};
}

bool same_params(const DenoiserParams& a, const DenoiserParams& b) {
  std::vector<std::vector<double>> va, vb;
  a.visit([&](const std::string&, const std::vector<double>& v) { va.push_back(v); });
  b.visit([&](const std::string&, const std::vector<double>& v) { vb.push_back(v); });
  return va == vb;
}

}  // namespace

// ---------------------------------------------------------------------------
// resample_plan

TEST(ResamplePlan, TableSizes) {
  const std::vector<std::size_t> sizes{306000, 145000, 103000, 61000, 21000, 17000,
                                       14000,  8000,   5000,   3000,  1000};
  const SamplePlan p = resample_plan(sizes, 0.1);
  const std::vector<std::size_t> expected{1, 1, 1, 1, 2, 2, 3, 4, 7, 11, 31};
  EXPECT_EQ(p.replication, expected);
}

TEST(ResamplePlan, SpecExamples) {
  EXPECT_EQ(resample_plan({306000, 1000}, 0.1).replication, (std::vector<std::size_t>{1, 31}));
  EXPECT_EQ(resample_plan({5}, 0.1).replication, (std::vector<std::size_t>{1}));
  EXPECT_EQ(resample_plan({100, 100}, 0.1).replication, (std::vector<std::size_t>{1, 1}));
}

TEST(ResamplePlan, ReachesThresholdWithoutOverReplication) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> sizes;
    for (int k = 0; k < 6; ++k) sizes.push_back(1 + rng.integer(0, 50000));
    const double fraction = rng.uniform(0.01, 1.0);
    const SamplePlan p = resample_plan(sizes, fraction);
    const double threshold = fraction * static_cast<double>(*std::max_element(sizes.begin(), sizes.end()));
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const double got = static_cast<double>(sizes[k] * p.replication[k]);
      EXPECT_GE(got, threshold * (1.0 - 1e-9));
      if (p.replication[k] > 1) {
        EXPECT_LT(static_cast<double>(sizes[k] * (p.replication[k] - 1)), threshold);
      }
    }
  }
}

TEST(ResamplePlan, Errors) {
  EXPECT_THROW(resample_plan({}, 0.1), Error);
  EXPECT_THROW(resample_plan({10}, 0.0), Error);
  EXPECT_THROW(resample_plan({10}, 1.5), Error);
  EXPECT_THROW(resample_plan({10, 0}, 0.1), Error);
}

// ---------------------------------------------------------------------------
// prepare_sample

TEST(PrepareSample, FullCropAtTargetSizeIsIdentity) {
  Rng rng(1);
  const Image img = random_image(40, 40, 3, rng);
  Disparity d(40, 40);
  for (float& v : d.values) v = static_cast<float>(rng.uniform(0.0, 5.0));
  const PreparedSample p = prepare_sample(img, std::nullopt, d, 40, 7, false);
  EXPECT_EQ(p.left, img);
  EXPECT_EQ(p.disparity, d);
}

TEST(PrepareSample, UpscalingDoublesDisparities) {
  Rng rng(2);
  const Image img = random_image(48, 48, 3, rng);
  const Disparity d(48, 48, 3.0f);
  const PreparedSample p = prepare_sample(img, img, d, 64, CropWindow{4, 8, 32});
  ASSERT_EQ(p.disparity.width, 64u);
  for (float v : p.disparity.values) EXPECT_FLOAT_EQ(v, 6.0f);
  EXPECT_EQ(p.left.height, 64u);
  EXPECT_EQ(*p.right, p.left);
}

TEST(PrepareSample, SeededCropsRepeatAndStayInRange) {
  Rng rng(3);
  const Image img = random_image(50, 70, 3, rng);
  const Disparity d(50, 70, 1.0f);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const CropWindow a = draw_crop(50, 70, seed), b = draw_crop(50, 70, seed);
    EXPECT_EQ(a.side, b.side);
    EXPECT_EQ(a.top, b.top);
    EXPECT_EQ(a.left, b.left);
    EXPECT_GE(a.side, 25u);
    EXPECT_LE(a.side, 50u);
    EXPECT_LE(a.top + a.side, 50u);
    EXPECT_LE(a.left + a.side, 70u);
  }
  EXPECT_EQ(prepare_sample(img, std::nullopt, d, 32, 9).left,
            prepare_sample(img, std::nullopt, d, 32, 9).left);
}

TEST(PrepareSample, TooSmall) {
  EXPECT_THROW(prepare_sample(Image(20, 40, 3), std::nullopt, Disparity(20, 40), 16, 0), Error);
}

// ---------------------------------------------------------------------------
// generate_right_view

TEST(Generate, ZeroDisparityWithSaturatedFusionReturnsLeft) {
  const Config c = tiny_config();
  Model m = make_model(c, 1);
  m.fusion.conv.bias[0] = 20.0;
  Rng rng(4);
  const Image left = random_image(32, 32, 3, rng);
  const Generation g = generate_right_view(left, Disparity(32, 32, 0.0f), GenSettings::from(c), m);
  EXPECT_EQ(g.mask.count(), 32u * 32u);
  for (std::size_t k = 0; k < left.values.size(); ++k) EXPECT_NEAR(g.right.values[k], left.values[k], 1e-6);
}

TEST(Generate, GammaZeroGivesNearIdentity) {
  Config c = tiny_config();
  c.gamma = 0.0;
  Model m = make_model(c, 2);
  m.fusion.conv.bias[0] = 20.0;
  const StereoScene s = default_scene(32);
  const Generation g = generate_right_view(s.left(), s.disparity(), GenSettings::from(c), m);
  EXPECT_GT(psnr(g.right, s.left()), 40.0);
}

TEST(Generate, MaskMatchesForwardWarp) {
  const Config c = tiny_config();
  const Model m = make_model(c, 3);
  const StereoScene s = default_scene(32);
  const Generation g = generate_right_view(s.left(), s.disparity(), GenSettings::from(c), m);
  const Disparity scaled = normalize_and_scale(s.disparity(), 0.125, 32);
  const WarpResult w = forward_warp(s.left().to_tensor(), scaled);
  EXPECT_EQ(g.mask, w.mask);
  EXPECT_EQ(g.warped.values, w.warped.values());
  EXPECT_LT(g.mask.count(), 32u * 32u);
}

TEST(Generate, DeterministicPerSeed) {
  const Config c = tiny_config();
  const Model m = make_model(c, 5);
  const StereoScene s = default_scene(32);
  GenSettings g = GenSettings::from(c);
  const Image a = generate_right_view(s.left(), s.disparity(), g, m).right;
  EXPECT_EQ(a, generate_right_view(s.left(), s.disparity(), g, m).right);
  g.seed = 1;
  EXPECT_NE(a, generate_right_view(s.left(), s.disparity(), g, m).right);
}

TEST(Generate, FusionOffReturnsGeneratedImage) {
  Config c = tiny_config();
  c.fusion_enabled = false;
  const Model m = make_model(c, 6);
  const StereoScene s = default_scene(32);
  const Generation g = generate_right_view(s.left(), s.disparity(), GenSettings::from(c), m);
  EXPECT_EQ(g.right, g.generated);
}

TEST(Generate, ErrorsCarryStageTags) {
  const Config c = tiny_config();
  const Model m = make_model(c, 7);
  GenSettings g = GenSettings::from(c);
  try {
    generate_right_view(Image(30, 30, 3), Disparity(30, 30), g, m);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "input");
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  g.gamma = 1.5;
  try {
    generate_right_view(Image(32, 32, 3), Disparity(32, 32, 1.0f), g, m);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "normalize");
  }
}

// ---------------------------------------------------------------------------
// train_toy

TEST(TrainToy, SameSeedSameCurve) {
  Config c = tiny_config();
  c.dropout.fraction = 0.5;
  const auto a = train_toy(scene_set(), c), b = train_toy(scene_set(), c);
  ASSERT_EQ(a.loss.size(), 20u);
  for (std::size_t k = 0; k < a.loss.size(); ++k) EXPECT_EQ(a.loss[k].total, b.loss[k].total);
  EXPECT_EQ(a.fusion_loss, b.fusion_loss);
  EXPECT_EQ(a.dropout_steps, b.dropout_steps);
  EXPECT_TRUE(same_params(a.model.denoiser, b.model.denoiser));
  c.seed = 1;
  EXPECT_NE(train_toy(scene_set(), c).loss.front().total, a.loss.front().total);
}

TEST(TrainToy, DropoutFractionZeroNeverDraws) {
  Config c = tiny_config();
  c.dropout.fraction = 0.0;
  EXPECT_EQ(train_toy(scene_set(), c).dropout_count(), 0u);
  c.dropout.fraction = 1.0;
  EXPECT_EQ(train_toy(scene_set(), c).dropout_count(), 20u);
}

TEST(TrainToy, DropoutSelectsAboutTheConfiguredFraction) {
  Config c = tiny_config();
  c.dropout.fraction = 0.1;
  std::size_t hits = 0;
  for (std::uint64_t k = 0; k < 2000; ++k)
    hits += detail::make_train_item(scene_set().front().samples.front(), c, mix_seed(0, k), true).dropped;
  EXPECT_NEAR(static_cast<double>(hits) / 2000.0, 0.1, 0.02);
}

// Items not selected by the draw are identical to a dropout-free run, and
// selected items only lose mask pixels (and the matching warp pixels).
TEST(TrainToy, DropoutChangesOnlySelectedSamples) {
  Config with = tiny_config(), without = tiny_config();
  with.dropout.fraction = 0.3;
  without.dropout.fraction = 0.0;
  const StereoSample s = scene_set().front().samples.front();
  std::size_t selected = 0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto a = detail::make_train_item(s, with, k, true);
    const auto b = detail::make_train_item(s, without, k, true);
    EXPECT_EQ(a.prep.left, b.prep.left);
    if (!a.dropped) {
      EXPECT_EQ(a.mask, b.mask);
      EXPECT_EQ(a.warped, b.warped);
      continue;
    }
    ++selected;
    for (std::size_t p = 0; p < a.mask.values.size(); ++p) EXPECT_LE(a.mask.values[p], b.mask.values[p]);
  }
  EXPECT_GT(selected, 30u);
}

TEST(TrainToy, SingleSceneLossDropsByEightyPercent) {
  Config c;
  c.gamma = 0.125;
  c.train.steps = 500;
  c.train.random_crop = false;
  c.train.fusion_steps = 0;
  c.dropout.fraction = 0.0;
  const auto r = train_toy(scene_set(64), c);
  double first = 0.0, last = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    first += r.loss[k].total / 10.0;
    last += r.loss[r.loss.size() - 1 - k].total / 10.0;
  }
  EXPECT_LE(last, 0.2 * first) << first << " -> " << last;
}

TEST(TrainToy, JointModeUpdatesFusionEveryStep) {
  Config c = tiny_config();
  c.train.joint = true;
  const auto r = train_toy(scene_set(), c);
  EXPECT_EQ(r.fusion_loss.size(), 20u);
  EXPECT_NE(r.model.fusion.conv.bias[0], 0.0);
}

TEST(TrainToy, ReplicatesSmallDatasets) {
  Config c = tiny_config();
  auto sets = scene_set();
  TrainSet big{"big", {}};
  for (int k = 0; k < 30; ++k) big.samples.push_back(sets.front().samples.front());
  sets.insert(sets.begin(), big);
  const auto r = train_toy(sets, c);
  EXPECT_EQ(r.plan.replication, (std::vector<std::size_t>{1, 3}));
  c.ablation.mixed_datasets = false;
  EXPECT_EQ(train_toy(sets, c).plan.sizes.size(), 1u);
}

TEST(TrainToy, RequiresRightViews) {
  auto sets = scene_set();
  sets.front().samples.front().right.reset();
  EXPECT_THROW(train_toy(sets, tiny_config()), Error);
  EXPECT_THROW(train_toy({}, tiny_config()), Error);
}

// ---------------------------------------------------------------------------
// checkpoints, config, datasets

TEST(Checkpoint, RoundTripsThroughFloat32) {
  const Config c = tiny_config();
  Model m = make_model(c, 11);
  m.fusion.conv.bias[0] = 0.25;
  const auto dir = scratch("ckpt");
  save_model(m, dir);
  const Model back = load_model(dir);
  EXPECT_EQ(back.denoiser.shape, m.denoiser.shape);
  EXPECT_EQ(back.codec_factor, m.codec_factor);
  std::vector<double> a, b;
  m.denoiser.visit([&](const std::string&, const std::vector<double>& v) { a.insert(a.end(), v.begin(), v.end()); });
  back.denoiser.visit([&](const std::string&, const std::vector<double>& v) { b.insert(b.end(), v.begin(), v.end()); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(b[k], static_cast<double>(static_cast<float>(a[k])));
  EXPECT_EQ(load_fusion(dir).conv.bias[0], 0.25);
  // saving the reloaded model reproduces every tensor file byte for byte
  const auto again = scratch("ckpt_again");
  save_model(back, again);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    EXPECT_EQ(read_file(e.path()), read_file(again / e.path().filename())) << e.path();
}

TEST(Checkpoint, MissingTensorIsAFormatError) {
  const auto dir = scratch("ckpt_missing");
  save_model(make_model(tiny_config(), 1), dir);
  std::filesystem::remove(dir / "attn.wq.gst");
  EXPECT_THROW(load_model(dir), Error);
}

TEST(Config, ParsesSchemaAndRejectsBadValues) {
  const Config c = config_from_json(Json::parse(R"({
    "gamma_set": [0.05, 0.1], "crop_size": 32, "codec_factor": 2,
    "schedule": {"T": 50, "beta_start": 0.001, "beta_end": 0.01},
    "sampler_steps": 10, "alpha": 0.5, "dropout": {"fraction": 0.2, "mode": "or"},
    "fusion": {"enabled": false}, "seed": 9})"));
  EXPECT_EQ(c.gamma_set, (std::vector<double>{0.05, 0.1}));
  EXPECT_EQ(c.generation_gamma(), 0.05);
  EXPECT_EQ(c.crop_size, 32u);
  EXPECT_EQ(c.schedule.steps, 50);
  EXPECT_EQ(c.dropout.mode, CombineMode::logical_or);
  EXPECT_FALSE(c.fusion_enabled);
  EXPECT_EQ(c.seed, 9u);
  const Config again = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(again), config_to_json(c));

  EXPECT_THROW(config_from_json(Json::parse(R"({"gamma": 1.5})")), Error);
  EXPECT_THROW(config_from_json(Json::parse(R"({"dropout": {"mode": "xor"}})")), Error);
  EXPECT_THROW(config_from_json(Json::parse(R"({"crop_size": 30, "codec_factor": 4})")), Error);
  EXPECT_THROW(config_from_json(Json::parse(R"({"sampler_steps": 200})")), Error);
  EXPECT_THROW(config_from_json(Json::parse(R"({"crop_size": "big"})")), Error);
  EXPECT_THROW(Config{}.generation_gamma(), Error);
}

TEST(Dataset, DirectoryAdapterRoundTrip) {
  const auto root = scratch("dataset");
  const StereoScene s = default_scene(32);
  const Image left = s.left(), right = s.right();
  save_sample(root / "synthetic", "0000", left, &right, s.disparity());
  Disparity sparse = s.disparity();
  sparse.invalidate(0, 0);
  write_disparity(root / "kitti" / "disp" / "a.png", sparse);
  write_png(root / "kitti" / "left" / "a.png", left);

  const auto found = discover_datasets(root);
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].name, "kitti");
  EXPECT_EQ(found[0].disparity, DisparityFormat::png16);
  const DatasetSpec kitti = scan_dataset(found[0]);
  EXPECT_FALSE(kitti.paired);
  const StereoSample k = load_sample(kitti, 0);
  EXPECT_FALSE(k.disparity.is_valid(0, 0));
  EXPECT_EQ(k.disparity(5, 5), sparse(5, 5));  // multiples of 1/256 survive exactly

  const DatasetSpec syn = scan_dataset(found[1]);
  EXPECT_TRUE(syn.paired);
  const StereoSample p = load_sample(syn, 0);
  EXPECT_EQ(p.disparity, s.disparity());
  EXPECT_GT(psnr(p.left, left), 45.0);  // 8-bit quantization only
}

// ---------------------------------------------------------------------------
// evaluation

TEST(Eval, IdenticalPairsHitCaps) {
  Rng rng(12);
  const Image a = random_image(16, 16, 3, rng);
  const EvalReport r = eval_generation({{"a", a, a}});
  ASSERT_EQ(r.aggregate.size(), 2u);
  EXPECT_EQ(r.aggregate[0].mean.name, "psnr");
  EXPECT_EQ(r.aggregate[0].mean.value, 99.0);
  EXPECT_NEAR(r.aggregate[1].mean.value, 1.0, 1e-12);
  EXPECT_EQ(r.aggregate[1].mean.count, 1u);
}

TEST(Eval, AggregateIsTheMeanWithOffsets) {
  const Image zero(16, 16, 1, 0.0f);
  const EvalReport r = eval_generation({{"a", zero, Image(16, 16, 1, 0.1f)},
                                        {"b", zero, Image(16, 16, 1, 0.01f)},
                                        {"c", zero, zero}});
  const double p1 = r.pairs[0].metrics[0].value, p2 = r.pairs[1].metrics[0].value;
  EXPECT_NEAR(p1, 20.0, 1e-5);
  EXPECT_NEAR(p2, 40.0, 1e-4);
  EXPECT_NEAR(r.aggregate[0].mean.value, (p1 + p2 + 99.0) / 3.0, 1e-12);
  EXPECT_EQ(r.aggregate[0].min, p1);
  EXPECT_EQ(r.aggregate[0].max, 99.0);
  const Json j = report_to_json(r);
  EXPECT_EQ(j["aggregate"][0]["metric"], "psnr");
  EXPECT_EQ(j["aggregate"][0]["count"], 3);
  EXPECT_NEAR(j["aggregate"][0]["plus"].get<double>(), 99.0 - r.aggregate[0].mean.value, 1e-12);
}

TEST(Eval, StereoModesAndThresholds) {
  const EvalReport r = eval_stereo({{"p", Disparity(2, 2, 104.0f), Disparity(2, 2, 100.0f)}}, D1Mode::either);
  const auto& m = r.pairs[0].metrics;
  EXPECT_EQ(m[0].name, "epe");
  EXPECT_DOUBLE_EQ(m[0].value, 4.0);
  EXPECT_DOUBLE_EQ(m[1].value, 100.0);
  EXPECT_EQ(m[2].name, "bad_1px");
  EXPECT_EQ(m[4].name, "bad_3px");
  EXPECT_DOUBLE_EQ(m[4].value, 100.0);
  EXPECT_EQ(m[0].count, 4u);
}

TEST(Eval, ExternalScoresAreAttached) {
  const Image a(16, 16, 3, 0.5f);
  EvalReport r = eval_generation({{"x", a, a}, {"y", a, a}});
  attach_external(r, Json::parse(R"({"metric": "lpips", "values": {"x": 0.1, "y": 0.3}})"));
  ASSERT_EQ(r.aggregate.size(), 3u);
  EXPECT_NEAR(r.aggregate[2].mean.value, 0.2, 1e-12);
  EXPECT_THROW(attach_external(r, Json::parse(R"({"metric": "lpips", "values": {"x": 0.1}})")), Error);
}

TEST(Eval, EmptyAndMismatched) {
  EXPECT_THROW(eval_generation({}), Error);
  EXPECT_THROW(eval_generation({{"a", Image(16, 16, 3), Image(16, 17, 3)}}), Error);
  EXPECT_THROW(eval_stereo({}), Error);
}
