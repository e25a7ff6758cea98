// Writes synthetic stereo datasets in the directory layout the CLI reads:
//   <out>/<name>/left/*.png, right/*.png, disp/*.pfm
// plus a starter config.json in <out>.

#include <cstdio>

#include "CLI11.hpp"

#include "genstereo/genstereo.hpp"

namespace fs = std::filesystem;
using namespace genstereo;

int main(int argc, char** argv) {
  CLI::App app{"write synthetic stereo scenes for the genstereo CLI"};
  fs::path out;
  std::size_t size = 64, count = 1;
  bool mono = false, png16 = false;
  std::string name = "scene";
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--size", size, "image side in pixels (multiple of 8)");
  app.add_option("--count", count, "number of scenes; later ones shift the rectangles");
  app.add_option("--name", name, "dataset folder name");
  app.add_flag("--mono", mono, "omit right views");
  app.add_flag("--png16", png16, "store disparity as 16-bit PNG (value/256)");
  CLI11_PARSE(app, argc, argv);

  try {
    require(size >= 32 && size % 8 == 0, ErrorKind::domain, "--size must be a multiple of 8, >= 32");
    const fs::path root = out / name;
    for (std::size_t n = 0; n < count; ++n) {
      StereoScene s = default_scene(size);
      for (auto& r : s.rects) r.left += n % (size / 8);
      const std::string stem = "scene" + std::to_string(n);
      const Image left = s.left(), right = s.right();
      write_png(root / "left" / (stem + ".png"), left);
      if (!mono) write_png(root / "right" / (stem + ".png"), right);
      if (png16)
        write_disparity(root / "disp" / (stem + ".png"), s.disparity());
      else
        write_disparity(root / "disp" / (stem + ".pfm"), s.disparity());
    }
    Config c;
    c.gamma = 8.0 / static_cast<double>(size);  // keeps the scene's own disparities
    c.crop_size = size;
    c.train.random_crop = false;
    write_text(out / "config.json", config_to_json(c).dump(2) + "\n");
    std::printf("wrote %zu scene(s) to %s\n", count, root.string().c_str());
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return 1;
  }
  return 0;
}
