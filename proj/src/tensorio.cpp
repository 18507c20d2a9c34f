#include "beamkit/tensorio.hpp"

#include <cstring>
#include <fstream>

#include "nlohmann/json.hpp"

namespace beamkit {

namespace {
constexpr char kMagic[4] = {'B', 'K', 'T', 'B'};
constexpr uint32_t kVersion = 1;
}  // namespace

const NamedTensor& TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw IoError("tensor file: missing tensor '" + name + "'");
}

bool TensorFile::contains(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
  nlohmann::json meta;
  try {
    meta = file.manifest_json.empty() ? nlohmann::json::object()
                                      : nlohmann::json::parse(file.manifest_json);
  } catch (const std::exception& e) {
    throw IoError(std::string("save_tensor_file: manifest is not JSON: ") + e.what());
  }
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : file.tensors) {
    if (t.size() != static_cast<int64_t>(t.data.size()))
      throw ShapeError("save_tensor_file: shape/data mismatch for '" + t.name + "'");
    list.push_back({{"name", t.name}, {"shape", t.shape}});
  }
  nlohmann::json root = {{"meta", meta}, {"tensors", list}};
  std::string manifest = root.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_tensor_file: cannot open " + path);
  f.write(kMagic, 4);
  uint32_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  uint64_t mlen = manifest.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(manifest.data(), static_cast<std::streamsize>(mlen));
  for (const auto& t : file.tensors)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw IoError("save_tensor_file: write failed for " + path);
}

TensorFile load_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_tensor_file: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("load_tensor_file: bad magic in " + path);
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kVersion) throw IoError("load_tensor_file: unsupported version");
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  if (!f || mlen > (1ull << 30)) throw IoError("load_tensor_file: bad manifest length");
  std::string manifest(mlen, '\0');
  f.read(manifest.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw IoError("load_tensor_file: truncated manifest");

  nlohmann::json root;
  try {
    root = nlohmann::json::parse(manifest);
  } catch (const std::exception& e) {
    throw IoError(std::string("load_tensor_file: manifest parse: ") + e.what());
  }

  TensorFile out;
  out.manifest_json = root.at("meta").dump();
  for (const auto& item : root.at("tensors")) {
    NamedTensor t;
    t.name = item.at("name").get<std::string>();
    t.shape = item.at("shape").get<std::vector<int64_t>>();
    int64_t n = t.size();
    if (n < 0 || n > (1ll << 32))
      throw IoError("load_tensor_file: implausible tensor size for '" + t.name + "'");
    t.data.resize(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw IoError("load_tensor_file: truncated tensor '" + t.name + "'");
    out.tensors.push_back(std::move(t));
  }
  return out;
}

}  // namespace beamkit
