#include "risur/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace risur {

namespace {

nlohmann::json header_json(const std::vector<ParamView>& params, const std::string& config_json,
                           const std::string& config_hash) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params) tensors.push_back({{"name", p.name}, {"shape", p.shape}});
  nlohmann::json config = config_json.empty() ? nlohmann::json(nullptr)
                                              : nlohmann::json::parse(config_json);
  return {{"format", "risur-checkpoint"},
          {"version", 1},
          {"config_hash", config_hash},
          {"config", config},
          {"tensors", tensors}};
}

struct Reader {
  std::FILE* f;
  std::string path;
  ~Reader() {
    if (f) std::fclose(f);
  }
  [[noreturn]] void fail(const std::string& what) { throw std::runtime_error(path + ": " + what); }
  void read(void* dst, size_t n, const char* what) {
    if (std::fread(dst, 1, n, f) != n) fail(std::string("truncated ") + what);
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    read(&v, 4, what);
    return v;
  }
};

nlohmann::json read_header(Reader& r) {
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, "RSCK", 4) != 0) r.fail("bad magic");
  std::uint32_t version = r.u32("version");
  if (version != 1) r.fail("unsupported version " + std::to_string(version));
  std::uint32_t hlen = r.u32("header length");
  std::string header(hlen, '\0');
  r.read(header.data(), hlen, "header");
  try {
    return nlohmann::json::parse(header);
  } catch (const std::exception& e) {
    r.fail(std::string("bad header json: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<ParamView>& params,
                     const std::string& config_json, const std::string& config_hash) {
  std::string header = header_json(params, config_json, config_hash).dump();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fwrite("RSCK", 1, 4, f);
  std::uint32_t version = 1, hlen = static_cast<std::uint32_t>(header.size());
  std::fwrite(&version, 4, 1, f);
  std::fwrite(&hlen, 4, 1, f);
  std::fwrite(header.data(), 1, header.size(), f);
  for (const auto& p : params) std::fwrite(p.data, 4, static_cast<size_t>(p.size), f);
  std::fclose(f);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  Reader r{std::fopen(path.c_str(), "rb"), path};
  if (!r.f) throw std::runtime_error("cannot open " + path);
  nlohmann::json h = read_header(r);
  CheckpointHeader out;
  out.config_hash = h.value("config_hash", "");
  if (h.contains("config") && !h.at("config").is_null()) out.config_json = h.at("config").dump();
  return out;
}

void load_checkpoint(const std::string& path, const std::vector<ParamView>& params) {
  Reader r{std::fopen(path.c_str(), "rb"), path};
  if (!r.f) throw std::runtime_error("cannot open " + path);
  nlohmann::json h = read_header(r);
  const auto& tensors = h.at("tensors");
  if (tensors.size() != params.size())
    r.fail("tensor count mismatch: file has " + std::to_string(tensors.size()) + ", model has " +
           std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors.at(i);
    if (t.at("name").get<std::string>() != params[i].name)
      r.fail("tensor " + std::to_string(i) + " name mismatch: file \"" +
             t.at("name").get<std::string>() + "\" vs model \"" + params[i].name + "\"");
    if (t.at("shape").get<std::vector<int>>() != params[i].shape)
      r.fail("tensor \"" + params[i].name + "\" shape mismatch");
  }
  for (const auto& p : params) r.read(p.data, static_cast<size_t>(p.size) * 4, p.name.c_str());
}

}  // namespace risur
