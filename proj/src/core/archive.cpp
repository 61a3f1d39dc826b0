#include "uadrs/core/archive.hpp"

#include <nlohmann/json.hpp>
#include <cstring>
#include <fstream>

namespace uadrs {

namespace {
constexpr char kMagic[8] = {'U', 'A', 'D', 'R', 'S', 'A', 'R', '1'};
}

void write_archive(const std::filesystem::path& path, const nlohmann::json& meta,
                   const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  nlohmann::json header;
  header["meta"] = meta;
  nlohmann::json dir = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t->shape();
    entry["offset"] = offset;
    dir.push_back(entry);
    offset += static_cast<uint64_t>(t->size()) * sizeof(float);
  }
  header["tensors"] = dir;
  const std::string hs = header.dump();

  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

LoadedArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint archive: " + path.string());
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated archive header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(hs);

  LoadedArchive la;
  la.meta = std::make_shared<nlohmann::json>(header.at("meta"));
  for (const auto& entry : header.at("tensors")) {
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IoError("truncated archive payload: " + path.string());
    la.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return la;
}

const Tensor& LoadedArchive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw IoError("archive has no tensor named '" + name + "'");
}

bool LoadedArchive::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return fnv1a_hex(bytes);
}

}  // namespace uadrs
