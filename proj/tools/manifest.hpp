/*
 * Copyright 2026 The FairHAI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRHAI_TOOLS_MANIFEST_HPP_
#define FAIRHAI_TOOLS_MANIFEST_HPP_

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "fairhai/config.hpp"

namespace fairhai::cli {

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

inline const char* kManifestName = "manifest.txt";

/// Hashes of every file under `root` (manifest excluded), sorted by path,
/// followed by the resolved seeds and config.
inline std::string build_manifest(const std::filesystem::path& root, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == kManifestName) continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  const ExperimentConfig& x = cfg.experiment;
  std::ostringstream m;
  m << "fairhai-manifest 1\n";
  m << "seed " << x.seed << "\n";
  m << "seed.data " << x.seeds().data << "\n";
  m << "seed.split " << x.seeds().split << "\n";
  m << "seed.experts " << x.experts.seed << "\n";
  m << "seed.step0 " << x.step0.seed << "\n";
  m << "seed.step1 " << x.step1.seed << "\n";
  m << "seed.step2 " << x.step2.stage.seed << "\n";
  m << "seed.eval " << x.bootstrap.seed << "\n";
  for (const auto& f : files) m << "file " << sha256_file(root / f) << " " << f << "\n";
  m << "config-begin\n" << to_ini(cfg) << "config-end\n";
  return m.str();
}

}  // namespace fairhai::cli

#endif  // FAIRHAI_TOOLS_MANIFEST_HPP_
