#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "esd/decode.hpp"
#include "esd/model.hpp"
#include "esd/persona.hpp"
#include "esd/service/session.hpp"

namespace esd::service {

struct TurnResponse {
  std::string session_id;
  std::size_t turn = 0;  // index of the supporter utterance in the dialogue
  std::string response;
  corpus::Strategy strategy = corpus::Strategy::Others;
  double alpha_used = 0.0;
  bool forced = false;
  std::uint64_t seed = 0;
  persona::PersonaSet persona;
  std::vector<std::pair<corpus::Strategy, double>> top_strategies;  // 3 best

  bool operator==(const TurnResponse&) const = default;
};

nlohmann::json to_json(const TurnResponse& r);

/// Generation back end. Defaults to decode::generate.
using Responder = std::function<decode::GenerationResult(
    const model::Model&, std::span<const corpus::Utterance>, const persona::PersonaSet&, const decode::DecodeConfig&,
    std::optional<corpus::Strategy>)>;

using IdGenerator = std::function<std::string()>;
using Clock = std::function<std::int64_t()>;  // milliseconds since the epoch

struct ServiceOptions {
  decode::DecodeConfig decode;
  std::shared_ptr<const persona::Extractor> extractor;  // default: rule extractor
  Responder responder;                                  // default: decode::generate
  IdGenerator id_generator;                             // default: 128 random bits in hex
  Clock clock;                                          // default: system clock
  std::string checkpoint_name;                          // reported by /healthz
};

/// Default per-turn seed: a hash of the session id and the turn index.
std::uint64_t default_turn_seed(const std::string& session_id, std::size_t turn);

/// The live loop over a frozen model. Turns on one session are serialised;
/// different sessions run in parallel.
class ChatService {
 public:
  ChatService(std::shared_ptr<const model::Model> model, std::shared_ptr<SessionStore> store,
              ServiceOptions options = {});

  Session create_session(const SessionOverrides& overrides = {});

  /// Throws NotFound.
  Session get_session(const std::string& id) const;

  /// Appends the seeker message, re-extracts the persona from seeker turns,
  /// generates and appends the reply, then persists. Nothing is persisted if
  /// any step fails.
  TurnResponse chat_turn(const std::string& session_id, const std::string& message,
                         std::optional<std::uint64_t> seed = std::nullopt,
                         std::optional<corpus::Strategy> forced_strategy = std::nullopt);

  const ServiceOptions& options() const { return options_; }
  const model::Model& model() const { return *model_; }
  SessionStore& store() { return *store_; }

 private:
  std::shared_ptr<std::mutex> lock_for(const std::string& id);

  std::shared_ptr<const model::Model> model_;
  std::shared_ptr<SessionStore> store_;
  ServiceOptions options_;
  std::mutex locks_mu_;
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::mutex create_mu_;
};

}  // namespace esd::service
