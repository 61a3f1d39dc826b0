#include "uadrs/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "uadrs/core/rng.hpp"
#include "uadrs/data/manifest.hpp"

namespace uadrs::data {

std::string task_name(Task t) {
  return t == Task::classification ? "classification" : "segmentation";
}

Task parse_task(const std::string& name) {
  if (name == "classification") return Task::classification;
  if (name == "segmentation") return Task::segmentation;
  throw ConfigError("unknown task '" + name + "'");
}

ImageBatch ImageBatch::slice(int first, int count) const {
  if (first < 0 || count < 1 || first + count > n())
    throw RangeError("batch slice out of range");
  ImageBatch out;
  out.pixels = Tensor({count, channels(), height(), width()});
  const int64_t per = static_cast<int64_t>(channels()) * height() * width();
  std::copy(pixels.data() + first * per, pixels.data() + (first + count) * per,
            out.pixels.data());
  out.ids.assign(ids.begin() + first, ids.begin() + first + count);
  return out;
}

std::vector<int32_t> LabeledBatch::label_slice(int first, int count) const {
  const int64_t per = task == Task::classification
                          ? 1
                          : static_cast<int64_t>(images.height()) *
                                images.width();
  return std::vector<int32_t>(labels.begin() + first * per,
                              labels.begin() + (first + count) * per);
}

io::Image8 sample_to_image(const Tensor& pixels, int sample) {
  const int c = pixels.dim(1), h = pixels.dim(2), w = pixels.dim(3);
  io::Image8 img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.pixels.resize(static_cast<size_t>(h) * w * c);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const float* base = pixels.data() + static_cast<int64_t>(sample) * c * plane;
  for (int64_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float v = std::clamp(base[ch * plane + i], 0.0f, 1.0f);
      img.pixels[static_cast<size_t>(i) * c + ch] =
          static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  return img;
}

void image_to_sample(const io::Image8& img, Tensor& pixels, int sample) {
  const int c = pixels.dim(1), h = pixels.dim(2), w = pixels.dim(3);
  if (img.channels != c || img.height != h || img.width != w)
    throw ShapeError("image does not fit batch slot");
  const int64_t plane = static_cast<int64_t>(h) * w;
  float* base = pixels.data() + static_cast<int64_t>(sample) * c * plane;
  for (int64_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < c; ++ch)
      base[ch * plane + i] =
          static_cast<float>(img.pixels[static_cast<size_t>(i) * c + ch]) /
          255.0f;
}

namespace {

namespace fs = std::filesystem;

std::vector<std::string> sorted_filenames(const fs::path& dir,
                                          const std::string& ext) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext)
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

int split_point(int n, double frac) {
  int k = static_cast<int>(std::lround(frac * n));
  return std::clamp(k, 0, n);
}

struct Sample {
  fs::path image;
  fs::path mask;  // segmentation only
  int32_t cls = -1;
  std::string id;
};

void append_sample(const Sample& s, const DatasetSpec& spec, int channels,
                   LabeledBatch& out, int slot) {
  io::Image8 img = io::read_png(s.image);
  if (img.height != spec.height || img.width != spec.width ||
      img.channels != channels)
    throw IngestionError("unexpected geometry in " + s.image.string());
  image_to_sample(img, out.images.pixels, slot);
  out.images.ids[static_cast<size_t>(slot)] = s.id;
  if (spec.task == Task::classification) {
    out.labels[static_cast<size_t>(slot)] = s.cls;
  } else {
    io::Image8 mask = io::read_png(s.mask);
    if (mask.channels != 1)
      throw SchemaError("mask is not single-channel: " + s.mask.string());
    if (mask.height != spec.height || mask.width != spec.width)
      throw IngestionError("mask geometry mismatch: " + s.mask.string());
    const int64_t plane = static_cast<int64_t>(spec.height) * spec.width;
    for (int64_t i = 0; i < plane; ++i) {
      const int32_t v = mask.pixels[static_cast<size_t>(i)];
      if (v >= spec.n_classes)
        throw SchemaError("mask value " + std::to_string(v) +
                          " out of range in " + s.mask.string());
      out.labels[static_cast<size_t>(slot * plane + i)] = v;
    }
  }
}

LabeledBatch assemble(const std::vector<Sample>& samples,
                      const DatasetSpec& spec, int channels) {
  if (samples.empty())
    throw InsufficientDataError("split has no samples under " +
                                spec.root.string());
  LabeledBatch out;
  out.task = spec.task;
  const int n = static_cast<int>(samples.size());
  out.images.pixels = Tensor({n, channels, spec.height, spec.width});
  out.images.ids.resize(static_cast<size_t>(n));
  out.labels.resize(spec.task == Task::classification
                        ? static_cast<size_t>(n)
                        : static_cast<size_t>(n) * spec.height * spec.width);
  for (int i = 0; i < n; ++i) append_sample(samples[i], spec, channels, out, i);
  return out;
}

int probe_channels(const fs::path& any_image) {
  return io::read_png(any_image).channels;
}

}  // namespace

DatasetSplits load_dataset(const DatasetSpec& spec) {
  if (!fs::exists(spec.root))
    throw DatasetNotFoundError("dataset root does not exist: " +
                               spec.root.string());
  if (spec.n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    throw ConfigError("train_fraction must lie in (0,1)");

  Rng master(spec.seed);
  std::vector<Sample> train, test;

  if (spec.task == Task::classification) {
    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(spec.root))
      if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (static_cast<int>(class_dirs.size()) != spec.n_classes)
      throw SchemaError("expected " + std::to_string(spec.n_classes) +
                        " class directories, found " +
                        std::to_string(class_dirs.size()));
    for (int cls = 0; cls < spec.n_classes; ++cls) {
      const fs::path dir = spec.root / class_dirs[static_cast<size_t>(cls)];
      auto names = sorted_filenames(dir, ".png");
      if (names.empty())
        throw SchemaError("class directory is empty: " + dir.string());
      std::vector<int> order(names.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      Rng rng = master.fork(static_cast<uint64_t>(cls) + 1);
      rng.shuffle(order);
      const int k = split_point(static_cast<int>(names.size()),
                                spec.train_fraction);
      for (size_t i = 0; i < order.size(); ++i) {
        Sample s;
        s.image = dir / names[static_cast<size_t>(order[i])];
        s.cls = cls;
        s.id = class_dirs[static_cast<size_t>(cls)] + "/" +
               names[static_cast<size_t>(order[i])];
        (static_cast<int>(i) < k ? train : test).push_back(std::move(s));
      }
    }
  } else {
    const fs::path img_dir = spec.root / "images";
    const fs::path mask_dir = spec.root / "masks";
    if (!fs::exists(img_dir) || !fs::exists(mask_dir))
      throw SchemaError("segmentation layout needs images/ and masks/ under " +
                        spec.root.string());
    auto names = sorted_filenames(img_dir, ".png");
    if (names.empty())
      throw SchemaError("images directory is empty: " + img_dir.string());
    std::vector<int> order(names.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng = master.fork(1);
    rng.shuffle(order);
    const int k =
        split_point(static_cast<int>(names.size()), spec.train_fraction);
    for (size_t i = 0; i < order.size(); ++i) {
      const std::string& name = names[static_cast<size_t>(order[i])];
      Sample s;
      s.image = img_dir / name;
      s.mask = mask_dir / name;
      if (!fs::exists(s.mask))
        throw SchemaError("mask missing for " + name);
      s.id = name;
      (static_cast<int>(i) < k ? train : test).push_back(std::move(s));
    }
  }

  // order inside each split is stable: sort back by id
  auto by_id = [](const Sample& a, const Sample& b) { return a.id < b.id; };
  std::sort(train.begin(), train.end(), by_id);
  std::sort(test.begin(), test.end(), by_id);

  const int channels = probe_channels(train.front().image);
  DatasetSplits splits;
  splits.train = assemble(train, spec, channels);
  splits.test = assemble(test, spec, channels);
  return splits;
}

// --- Manifest ---------------------------------------------------------------

std::string canonical_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void atomic_write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::error_code ec;
  if (!path.parent_path().empty())
    std::filesystem::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move into place: " + path.string());
}

nlohmann::json ExperimentManifest::to_json() const {
  nlohmann::json j;
  j["dataset_root"] = dataset_root;
  j["task"] = task;
  j["victim_checkpoint"] = victim_checkpoint;
  j["diffusion_checkpoint"] = diffusion_checkpoint;
  j["attack"] = attack;
  j["selected_level"] = selected_level;
  j["seed"] = seed;
  j["metrics"] = metrics;
  j["artifacts"] = artifacts;
  j["seeds"] = seeds;
  j["tool_version"] = tool_version;
  return j;
}

ExperimentManifest ExperimentManifest::from_json(const nlohmann::json& j) {
  ExperimentManifest m;
  try {
    m.dataset_root = j.at("dataset_root").get<std::string>();
    m.task = j.at("task").get<std::string>();
    m.victim_checkpoint = j.at("victim_checkpoint").get<std::string>();
    m.diffusion_checkpoint = j.at("diffusion_checkpoint").get<std::string>();
    m.attack = j.at("attack").get<std::string>();
    m.selected_level = j.at("selected_level").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.metrics = j.at("metrics");
    m.artifacts = j.value("artifacts", nlohmann::json::object());
    m.seeds = j.value("seeds", nlohmann::json::object());
    m.tool_version = j.value("tool_version", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  return m;
}

bool ExperimentManifest::operator==(const ExperimentManifest& o) const {
  return to_json() == o.to_json();
}

void write_manifest(const ExperimentManifest& m,
                    const std::filesystem::path& path) {
  auto must_exist = [](const std::string& p, const char* what) {
    if (!p.empty() && !fs::exists(p))
      throw ValidationError(std::string(what) + " does not exist: " + p);
  };
  must_exist(m.dataset_root, "dataset root");
  must_exist(m.victim_checkpoint, "victim checkpoint");
  must_exist(m.diffusion_checkpoint, "diffusion checkpoint");
  for (const auto& [stage, ref] : m.artifacts.items()) {
    if (ref.is_string())
      must_exist(ref.get<std::string>(), ("artifact '" + stage + "'").c_str());
  }
  atomic_write_text(path, canonical_json(m.to_json()));
}

ExperimentManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest is not valid JSON: " + std::string(e.what()));
  }
  return ExperimentManifest::from_json(j);
}

}  // namespace uadrs::data
