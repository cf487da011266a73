#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "esd/corpus.hpp"
#include "esd/decode.hpp"
#include "esd/persona.hpp"

namespace esd::service {

/// Per-session decoding overrides; unset fields fall back to the service
/// defaults.
struct SessionOverrides {
  std::optional<double> alpha_override;
  std::optional<int> top_k;
  std::optional<double> top_p;
  std::optional<double> temperature;
  std::optional<double> repetition_penalty;
  std::optional<int> max_new_tokens;

  decode::DecodeConfig apply(decode::DecodeConfig base) const;
  bool operator==(const SessionOverrides&) const = default;
};

/// What the system decided for one supporter turn.
struct TurnMeta {
  double alpha_used = 0.0;
  bool forced = false;
  std::uint64_t seed = 0;
  std::vector<std::pair<corpus::Strategy, double>> ranking;  // top 3

  bool operator==(const TurnMeta&) const = default;
};

struct Session {
  std::string id;
  std::int64_t created_at_ms = 0;
  std::int64_t updated_at_ms = 0;
  SessionOverrides overrides;
  std::vector<corpus::Utterance> dialogue;
  persona::PersonaSet persona;                              // provenance = turn index
  std::map<std::size_t, persona::PersonaSet> persona_history;  // seeker turn -> snapshot
  std::map<std::size_t, TurnMeta> turn_meta;               // supporter turn -> decisions

  bool operator==(const Session&) const = default;
};

nlohmann::json to_json(const SessionOverrides& o);
SessionOverrides overrides_from_json(const nlohmann::json& j);
nlohmann::json persona_to_json(const persona::PersonaSet& p);
nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

/// Storage for sessions. Implementations must be safe for concurrent calls.
class SessionStore {
 public:
  virtual ~SessionStore() = default;
  /// Inserts or replaces. A replace is all-or-nothing.
  virtual void put(const Session& session) = 0;
  virtual std::optional<Session> get(const std::string& id) const = 0;
  virtual bool contains(const std::string& id) const = 0;
  virtual std::vector<std::string> ids() const = 0;
};

class MemorySessionStore final : public SessionStore {
 public:
  void put(const Session& session) override;
  std::optional<Session> get(const std::string& id) const override;
  bool contains(const std::string& id) const override;
  std::vector<std::string> ids() const override;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, Session> sessions_;
};

/// One "<id>.json" per session under a directory, written to a temporary file
/// and renamed into place. Everything found in the directory at construction
/// is indexed in memory; reads are served from the index.
class FileSessionStore final : public SessionStore {
 public:
  explicit FileSessionStore(std::filesystem::path dir);

  void put(const Session& session) override;
  std::optional<Session> get(const std::string& id) const override;
  bool contains(const std::string& id) const override;
  std::vector<std::string> ids() const override;

  std::filesystem::path path_of(const std::string& id) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Session> index_;
};

/// Session ids must be safe as file names: [A-Za-z0-9_-], 1..64 chars.
bool valid_session_id(const std::string& id);

}  // namespace esd::service
