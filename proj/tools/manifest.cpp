#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <ctime>
#include <fstream>
#include <memory>

#include "hsinr/errors.hpp"

#ifndef HSINR_VERSION
#define HSINR_VERSION "unknown"
#endif

namespace hsinr::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)),
      argv_(std::move(argv)),
      started_(std::chrono::system_clock::now()),
      t0_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::filesystem::path& path) { inputs_.emplace_back(path.string(), sha256_file(path)); }

void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

void RunManifest::write(const std::filesystem::path& path) {
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  const std::time_t start = std::chrono::system_clock::to_time_t(started_);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&start));

  nlohmann::ordered_json j;
  j["schema"] = "hsinr.manifest/1";
  j["command"] = command_;
  j["argv"] = argv_;
  j["version"] = HSINR_VERSION;
  j["seed"] = seed_ ? nlohmann::ordered_json(*seed_) : nlohmann::ordered_json(nullptr);
  j["config"] = config_;
  auto& in = j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [p, h] : inputs_) in.push_back({{"path", p}, {"sha256", h}});
  auto& out = j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : outputs_) {
    if (std::filesystem::exists(p))
      out.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    else
      out.push_back({{"path", p}});
  }
  if (!result_.is_null()) j["result"] = result_;
  j["started_at"] = stamp;
  j["wall_clock_seconds"] = secs;

  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace hsinr::cli
