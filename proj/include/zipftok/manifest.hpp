#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "zipftok/corpus.hpp"
#include "zipftok/errors.hpp"

namespace zipftok::manifest {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialisation failed");
  }

  void update(std::string_view data) { EVP_DigestUpdate(ctx_.get(), data.data(), data.size()); }

  std::string hex_digest() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xF]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

/// Passes documents through while hashing their normalized text. Each
/// document contributes its bytes followed by a 0x1E record separator.
template <corpus::DocumentSource Source>
class HashingSource {
 public:
  explicit HashingSource(Source& inner) : inner_(inner) {}

  bool next(corpus::Document& doc) {
    if (!inner_.next(doc)) return false;
    hash_.update(doc.text);
    hash_.update("\x1e");
    return true;
  }

  std::string hex_digest() { return hash_.hex_digest(); }

 private:
  Source& inner_;
  Sha256 hash_;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string corpus_path;
  std::string corpus_sha256;
  std::string format;
  bool lowercase = false;
  bool keep_headings = false;
  std::string algorithm;
  std::size_t target_size = 0;
  std::string boundary;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::size_t vocabulary_size = 0;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"corpus", {{"path", m.corpus_path}, {"sha256", m.corpus_sha256}, {"format", m.format},
                      {"lowercase", m.lowercase}, {"keep_headings", m.keep_headings}}},
          {"algorithm", m.algorithm},
          {"target_size", m.target_size},
          {"vocabulary_size", m.vocabulary_size},
          {"boundary", m.boundary},
          {"seed", m.seed},
          {"tool_version", m.tool_version},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at}};
}

}  // namespace zipftok::manifest
