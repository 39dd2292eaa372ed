#pragma once

#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "inversor/core.hpp"

namespace inversor {

/// Content-addressed store of objective evaluations, keyed by
/// hash(model id, prompt tokens, continuation tokens, reveal index).
/// Optionally persisted as an append-only JSONL log; a truncated tail entry
/// is ignored on load. Reads take a shared lock, writes are serialized.
class EvalCache {
public:
  EvalCache() = default;

  /// Opens (and replays) a persistent log at `path`, creating it if missing.
  explicit EvalCache(const std::string& path) : path_(path) {
    std::ifstream in(path_);
    if (in) {
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object() || !j.contains("k") || !j.contains("ll") ||
            !j.contains("ts") || !j.contains("mc")) {
          break;  // truncated or corrupt tail
        }
        Hash128 key;
        if (!parse_key(j["k"], key)) break;
        ObjectiveReport report;
        if (j["ll"].is_string()) {
          if (j["ll"].get<std::string>() != "-inf") break;
          report.log_likelihood = kNegInf;
        } else if (j["ll"].is_number()) {
          report.log_likelihood = j["ll"].get<double>();
        } else {
          break;
        }
        report.tokens_scored = j["ts"].get<int>();
        report.model_calls = j["mc"].get<int>();
        map_.emplace(key, report);
      }
    }
    log_.open(path_, std::ios::app);
    if (!log_) throw ConfigError("cannot open cache log for append: " + path_);
  }

  static Hash128 make_key(const std::string& model_id, const TokenSequence& prompt,
                          const TokenSequence& continuation, int reveal_index) {
    HashBuilder h;
    h.add(model_id).add(prompt).add(continuation).add(reveal_index);
    return h.digest();
  }

  std::optional<ObjectiveReport> find(const Hash128& key) const {
    std::shared_lock lock(mutex_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  /// First insert wins; the stored report is returned bit-identically forever.
  void insert(const Hash128& key, const ObjectiveReport& report) {
    std::unique_lock lock(mutex_);
    auto [it, fresh] = map_.emplace(key, report);
    if (fresh && log_.is_open()) {
      nlohmann::json j;
      j["k"] = key.hex();
      if (std::isfinite(report.log_likelihood)) {
        j["ll"] = report.log_likelihood;
      } else {
        j["ll"] = "-inf";
      }
      j["ts"] = report.tokens_scored;
      j["mc"] = report.model_calls;
      log_ << j.dump() << '\n';
      log_.flush();
    }
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return map_.size();
  }

  bool persistent() const { return !path_.empty(); }

private:
  static bool parse_key(const nlohmann::json& j, Hash128& out) {
    if (!j.is_string()) return false;
    std::string s = j.get<std::string>();
    if (s.size() != 32) return false;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      return -1;
    };
    std::uint64_t hi = 0, lo = 0;
    for (int i = 0; i < 16; ++i) {
      int n = nibble(s[static_cast<std::size_t>(i)]);
      if (n < 0) return false;
      hi = (hi << 4) | static_cast<std::uint64_t>(n);
    }
    for (int i = 16; i < 32; ++i) {
      int n = nibble(s[static_cast<std::size_t>(i)]);
      if (n < 0) return false;
      lo = (lo << 4) | static_cast<std::uint64_t>(n);
    }
    out = {hi, lo};
    return true;
  }

  mutable std::shared_mutex mutex_;
  std::unordered_map<Hash128, ObjectiveReport, Hash128Hasher> map_;
  std::string path_;
  std::ofstream log_;
};

}  // namespace inversor
