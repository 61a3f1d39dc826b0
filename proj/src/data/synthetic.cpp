#include <algorithm>
#include <cmath>
#include <cstdio>

#include "uadrs/core/rng.hpp"
#include "uadrs/data/dataset.hpp"
#include "uadrs/io/png.hpp"

namespace uadrs::data {

namespace {

constexpr double kTau = 6.283185307179586;

// One scalar texture field per class; template cycles with the class index,
// the frequency band steps every full cycle so any class count stays
// separable. Values in [0,1].
struct TextureParams {
  int tmpl = 0;
  int band = 0;
  // per-image randomness
  double theta = 0.0, phase = 0.0;
  double cx = 0.0, cy = 0.0;
  double ox = 0.0, oy = 0.0;
  std::vector<std::pair<double, double>> centers;
};

TextureParams draw_params(const std::string& family, int cls, int h, int w,
                          Rng& rng) {
  TextureParams p;
  p.tmpl = cls % 3;
  p.band = cls / 3;
  p.theta = rng.uniform(0.0, M_PI);
  p.phase = rng.uniform(0.0, kTau);
  p.cx = rng.uniform(0.2, 0.8) * w;
  p.cy = rng.uniform(0.2, 0.8) * h;
  p.ox = rng.uniform(0.0, 1.0);
  p.oy = rng.uniform(0.0, 1.0);
  if (family == "A" && p.tmpl == 1) {
    const int count = 4 + 2 * p.band;
    for (int i = 0; i < count; ++i)
      p.centers.emplace_back(rng.uniform(0.0, 1.0) * w,
                             rng.uniform(0.0, 1.0) * h);
  }
  return p;
}

// Texture contrast around mid-gray. Kept well below full range so the class
// signal lives at an amplitude where small-budget attacks have something to
// contest, rather than saturating the pixel domain.
constexpr double kContrast = 0.22;

double texture_raw(const std::string& family, const TextureParams& p, int h,
                   int w, int y, int x) {
  const double S = std::min(h, w);
  if (family == "A") {
    switch (p.tmpl) {
      case 0: {  // oriented stripes
        const double f = 3.0 + 2.0 * p.band;
        const double u =
            (x * std::cos(p.theta) + y * std::sin(p.theta)) / S;
        return 0.5 + 0.4 * std::sin(kTau * f * u + p.phase);
      }
      case 1: {  // soft blobs
        const double sigma = S / (5.0 + 2.0 * p.band);
        double acc = 0.0;
        for (const auto& [cx, cy] : p.centers) {
          const double dx = x - cx, dy = y - cy;
          acc += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
        return std::clamp(0.12 + 0.8 * acc, 0.0, 1.0);
      }
      default: {  // checkers
        const double cell = std::max(2.0, S / (2.0 * (2 + p.band)));
        const int qx = static_cast<int>(std::floor(x / cell + p.ox));
        const int qy = static_cast<int>(std::floor(y / cell + p.oy));
        return ((qx + qy) & 1) ? 0.8 : 0.2;
      }
    }
  }
  // family B: rings / dot lattice / bent waves
  switch (p.tmpl) {
    case 0: {  // concentric rings
      const double f = 3.0 + 2.0 * p.band;
      const double dx = x - p.cx, dy = y - p.cy;
      const double r = std::sqrt(dx * dx + dy * dy) / S;
      return 0.5 + 0.4 * std::sin(kTau * f * r + p.phase);
    }
    case 1: {  // dot lattice
      const double spacing = std::max(3.0, S / (4.0 + p.band));
      const double radius = spacing / 3.0;
      const double lx = x + p.ox * spacing, ly = y + p.oy * spacing;
      const double dx = lx - std::round(lx / spacing) * spacing;
      const double dy = ly - std::round(ly / spacing) * spacing;
      return (dx * dx + dy * dy < radius * radius) ? 0.85 : 0.2;
    }
    default: {  // waves bent along y
      const double f = 3.0 + 2.0 * p.band;
      const double u = x / S + 0.25 * std::sin(kTau * 1.5 * y / S + p.phase);
      return 0.5 + 0.4 * std::sin(kTau * f * u + p.theta);
    }
  }
}

double texture_value(const std::string& family, const TextureParams& p, int h,
                     int w, int y, int x) {
  return 0.5 + kContrast * (texture_raw(family, p, h, w, y, x) - 0.5);
}

io::Image8 quantize_rgb(const std::vector<float>& plane, int h, int w,
                        const float tint[3], Rng& rng) {
  io::Image8 img;
  img.height = h;
  img.width = w;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(h) * w * 3);
  for (int i = 0; i < h * w; ++i) {
    const float noise = static_cast<float>(rng.uniform(-0.02, 0.02));
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(plane[static_cast<size_t>(i)] * tint[c] + noise,
                                 0.0f, 1.0f);
      img.pixels[static_cast<size_t>(i) * 3 + c] =
          static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

std::string index_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04d.png", i);
  return buf;
}

}  // namespace

DatasetSpec generate_synthetic_corpus(Task task, int n_classes,
                                      int n_per_class, int height, int width,
                                      uint64_t seed,
                                      const std::filesystem::path& root,
                                      const std::string& family) {
  if (n_classes < 2) throw ConfigError("synthetic corpus needs >= 2 classes");
  if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (family != "A" && family != "B")
    throw ConfigError("unknown texture family '" + family + "'");

  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create corpus root: " + root.string());

  Rng master(seed);
  const int hw = height * width;
  std::vector<float> plane(static_cast<size_t>(hw));

  if (task == Task::classification) {
    for (int cls = 0; cls < n_classes; ++cls) {
      const auto dir = root / ("class_" + std::to_string(cls));
      std::filesystem::create_directories(dir, ec);
      if (ec) throw IoError("cannot create class dir: " + dir.string());
      for (int i = 0; i < n_per_class; ++i) {
        Rng rng = master.fork(static_cast<uint64_t>(cls),
                              static_cast<uint64_t>(i));
        TextureParams p = draw_params(family, cls, height, width, rng);
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x)
            plane[static_cast<size_t>(y) * width + x] = static_cast<float>(
                texture_value(family, p, height, width, y, x));
        float tint[3];
        for (float& t : tint) t = static_cast<float>(rng.uniform(0.82, 1.0));
        io::write_png(dir / index_name(i),
                      quantize_rgb(plane, height, width, tint, rng));
      }
    }
  } else {
    const auto img_dir = root / "images";
    const auto mask_dir = root / "masks";
    std::filesystem::create_directories(img_dir, ec);
    std::filesystem::create_directories(mask_dir, ec);
    const int total = n_classes * n_per_class;
    for (int i = 0; i < total; ++i) {
      Rng rng = master.fork(static_cast<uint64_t>(i));
      const int bg = static_cast<int>(rng.randint(0, n_classes - 1));
      int fg = static_cast<int>(rng.randint(0, n_classes - 2));
      if (fg >= bg) ++fg;
      TextureParams pb = draw_params(family, bg, height, width, rng);
      TextureParams pf = draw_params(family, fg, height, width, rng);
      // foreground disc, roughly a third of the area
      const double r = 0.33 * std::min(height, width);
      const double cx = rng.uniform(0.3, 0.7) * width;
      const double cy = rng.uniform(0.3, 0.7) * height;

      io::Image8 mask;
      mask.height = height;
      mask.width = width;
      mask.channels = 1;
      mask.pixels.resize(static_cast<size_t>(hw));
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double dx = x - cx, dy = y - cy;
          const bool inside = dx * dx + dy * dy < r * r;
          const TextureParams& p = inside ? pf : pb;
          plane[static_cast<size_t>(y) * width + x] = static_cast<float>(
              texture_value(family, p, height, width, y, x));
          mask.pixels[static_cast<size_t>(y) * width + x] =
              static_cast<uint8_t>(inside ? fg : bg);
        }
      float tint[3];
      for (float& t : tint) t = static_cast<float>(rng.uniform(0.82, 1.0));
      io::write_png(img_dir / index_name(i),
                    quantize_rgb(plane, height, width, tint, rng));
      io::write_png(mask_dir / index_name(i), mask);
    }
  }

  DatasetSpec spec;
  spec.root = root;
  spec.task = task;
  spec.n_classes = n_classes;
  spec.height = height;
  spec.width = width;
  spec.train_fraction = 0.8;
  spec.seed = seed;
  return spec;
}

}  // namespace uadrs::data
