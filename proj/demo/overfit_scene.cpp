// Library walk-through: train the toy model on one synthetic scene, generate
// the right view and compare it with the exact one.
//
//   overfit_scene [steps] [out_dir]

#include <cstdio>
#include <cstdlib>

#include "genstereo/genstereo.hpp"

using namespace genstereo;

int main(int argc, char** argv) {
  const int steps = argc > 1 ? std::atoi(argv[1]) : 2000;
  const std::filesystem::path out = argc > 2 ? argv[2] : "overfit_out";

  const StereoScene scene = default_scene(64);
  const Image left = scene.left(), right = scene.right();
  const Disparity disp = scene.disparity();

  Config c;
  c.gamma = 0.125;  // 8 px maximum on a 64 px image: scaling leaves the map as is
  c.train.steps = steps;
  c.train.random_crop = false;
  c.dropout.fraction = 0.0;

  const int every = std::max(1, steps / 10);
  const TrainResult r = train_toy({{"scene", {{"scene", left, right, disp}}}}, c,
                                  {[&](int step, const LossReport& l) {
                                    if (step % every == 0)
                                      std::printf("step %5d  loss %.5f\n", step, l.total);
                                  }});

  const Generation g = generate_right_view(left, disp, GenSettings::from(c), r.model);
  std::printf("warped only   PSNR %6.2f dB  (%.1f%% of pixels valid)\n", psnr(g.warped, right),
              100.0 * g.mask.mean());
  std::printf("generated     PSNR %6.2f dB\n", psnr(g.generated, right));
  std::printf("fused         PSNR %6.2f dB  SSIM %.4f\n", psnr(g.right, right), ssim(g.right, right));

  write_png(out / "left.png", left);
  write_png(out / "right_true.png", right);
  write_png(out / "right_warped.png", g.warped);
  write_png(out / "right_generated.png", g.generated);
  write_png(out / "right_fused.png", g.right);
  write_mask_png(out / "mask.png", g.mask);
  save_model(r.model, out / "checkpoint");
  std::printf("images and checkpoint in %s\n", out.string().c_str());
  return 0;
}
