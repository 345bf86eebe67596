#include "manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>

#include "opl/error.hpp"

#ifndef OPL_VERSION
#define OPL_VERSION "0.0.0"
#endif

namespace opl::cli {
namespace {

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string git_blob_hash(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void Progress::operator()(const std::string& stage, int pct) {
  const auto now = Clock::now();
  auto [it, fresh] = start_.emplace(stage, now);
  auto& last = last_pct_.try_emplace(stage, -1).first->second;
  if (pct == last) return;
  last = pct;
  std::cout << "stage=" << stage << " pct=" << pct << '\n' << std::flush;
  const double elapsed = std::chrono::duration<double>(now - it->second).count();
  for (auto& [name, secs] : seconds_) {
    if (name == stage) {
      secs = elapsed;
      return;
    }
  }
  seconds_.emplace_back(stage, elapsed);
}

void Manifest::write(const std::filesystem::path& dir, const Progress* progress) const {
  std::filesystem::create_directories(dir);
  const auto path = dir / "manifest.toml";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "tool = \"opl\"\n";
  out << "version = " << quoted(OPL_VERSION) << "\n";
  out << "command = " << quoted(command) << "\n";
  out << "threads = " << threads << "\n\n";

  out << "[seeds]\n";
  for (const auto& [name, value] : seeds) out << name << " = " << value << "\n";

  out << "\n[inputs]\n";
  for (const auto& file : inputs) out << quoted(file.string()) << " = " << quoted(git_blob_hash(file)) << "\n";

  out << "\n[stage_seconds]\n";
  if (progress) {
    for (const auto& [stage, secs] : progress->seconds()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", secs);
      out << stage << " = " << buf << "\n";
    }
  }

  out << "\n[config]\n" << config;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace opl::cli
