#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "cellloc/error.hpp"

namespace cellloc::cli {

namespace {

std::string to_hex(const unsigned char* data, unsigned len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out += kDigits[data[i] >> 4];
    out += kDigits[data[i] & 0xF];
  }
  return out;
}

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

MdCtx new_sha256() {
  MdCtx ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw InvariantError("sha256: digest init failed");
  }
  return ctx;
}

std::string finish(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned len = 0;
  if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) {
    throw InvariantError("sha256: digest final failed");
  }
  return to_hex(md.data(), len);
}

}  // namespace

std::string sha256_bytes(std::string_view bytes) {
  auto ctx = new_sha256();
  EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
  return finish(ctx.get());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  auto ctx = new_sha256();
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), in.gcount());
  }
  return finish(ctx.get());
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["config"] = config;
  j["seed"] = seed;
  j["data_dir"] = data_dir.string();
  auto files = [](const auto& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [name, digest] : list) {
      arr.push_back({{"path", name}, {"sha256", digest}});
    }
    return arr;
  };
  if (config_source) {
    j["config_source"] = {{"path", config_source->first},
                          {"sha256", config_source->second}};
  } else {
    j["config_source"] = nullptr;
  }
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("config_source") && !j.at("config_source").is_null()) {
      const auto& c = j.at("config_source");
      m.config_source.emplace(c.at("path").get<std::string>(),
                              c.at("sha256").get<std::string>());
    }
    for (const auto& f : j.at("inputs")) {
      m.inputs.emplace_back(f.at("path").get<std::string>(),
                            f.at("sha256").get<std::string>());
    }
    for (const auto& f : j.at("outputs")) {
      m.outputs.emplace_back(f.at("path").get<std::string>(),
                             f.at("sha256").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

void RunManifest::add_input(const std::filesystem::path& path,
                            const std::string& name) {
  inputs.emplace_back(name, sha256_file(path));
}

void RunManifest::add_output(const std::filesystem::path& path,
                             const std::string& name) {
  outputs.emplace_back(name, sha256_file(path));
}

void RunManifest::verify_inputs(const std::filesystem::path& root) const {
  for (const auto& [name, digest] : inputs) {
    const auto path = root / name;
    if (!std::filesystem::exists(path)) {
      throw DataError("manifest input missing: " + path.string());
    }
    if (sha256_file(path) != digest) {
      throw DataError("manifest input changed since the recorded run: " +
                      path.string());
    }
  }
}

}  // namespace cellloc::cli
