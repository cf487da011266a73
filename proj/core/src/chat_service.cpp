#include "esd/service/chat_service.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#include "esd/error.hpp"
#include "esd/random.hpp"
#include "esd/text.hpp"

namespace esd::service {

using nlohmann::json;

json to_json(const TurnResponse& r) {
  json ranking = json::array();
  for (const auto& [s, p] : r.top_strategies) ranking.push_back({{"strategy", corpus::display_name(s)}, {"probability", p}});
  return {{"session_id", r.session_id},
          {"turn", r.turn},
          {"response", r.response},
          {"strategy", corpus::display_name(r.strategy)},
          {"alpha_used", r.alpha_used},
          {"forced", r.forced},
          {"seed", r.seed},
          {"persona", persona_to_json(r.persona)},
          {"strategy_ranking", ranking}};
}

std::uint64_t default_turn_seed(const std::string& session_id, std::size_t turn) {
  return derive_seed(fnv1a(session_id), static_cast<std::uint64_t>(turn));
}

namespace {

std::string random_id() {
  static std::mutex mu;
  static Rng rng = [] {
    std::random_device rd;
    return Rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  }();
  std::lock_guard lock(mu);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ChatService::ChatService(std::shared_ptr<const model::Model> model, std::shared_ptr<SessionStore> store,
                         ServiceOptions options)
    : model_(std::move(model)), store_(std::move(store)), options_(std::move(options)) {
  if (!model_) throw InvalidArgument("chat service: no model");
  if (!store_) throw InvalidArgument("chat service: no session store");
  options_.decode.validate();
  if (!options_.extractor) options_.extractor = std::make_shared<persona::RuleExtractor>();
  if (!options_.responder) {
    options_.responder = [](const model::Model& m, std::span<const corpus::Utterance> d, const persona::PersonaSet& p,
                            const decode::DecodeConfig& c, std::optional<corpus::Strategy> f) {
      return decode::generate(m, d, p, c, f);
    };
  }
  if (!options_.id_generator) options_.id_generator = random_id;
  if (!options_.clock) options_.clock = now_ms;
}

std::shared_ptr<std::mutex> ChatService::lock_for(const std::string& id) {
  std::lock_guard lock(locks_mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

Session ChatService::create_session(const SessionOverrides& overrides) {
  overrides.apply(options_.decode).validate();
  Session s;
  s.overrides = overrides;
  {
    std::lock_guard lock(create_mu_);
    do {
      s.id = options_.id_generator();
      if (!valid_session_id(s.id)) throw Error("id generator produced an invalid id '" + s.id + "'");
    } while (store_->contains(s.id));
    s.created_at_ms = s.updated_at_ms = options_.clock();
    store_->put(s);
  }
  return s;
}

Session ChatService::get_session(const std::string& id) const {
  auto s = store_->get(id);
  if (!s) throw NotFound("no session '" + id + "'");
  return std::move(*s);
}

TurnResponse ChatService::chat_turn(const std::string& session_id, const std::string& message,
                                    std::optional<std::uint64_t> seed, std::optional<corpus::Strategy> forced) {
  const std::string text = text::squeeze_spaces(message);
  if (text.empty()) throw InvalidArgument("message is empty");
  if (!store_->contains(session_id)) throw NotFound("no session '" + session_id + "'");

  const auto mu = lock_for(session_id);
  std::lock_guard lock(*mu);
  Session s = get_session(session_id);  // working copy; the store is untouched until the end

  const std::size_t seeker_turn = s.dialogue.size();
  s.dialogue.push_back({corpus::Speaker::Seeker, text, std::nullopt});

  // annotate_conversation hands the extractor seeker utterances only.
  corpus::Conversation view;
  view.turns = s.dialogue;
  const persona::AnnotatedConversation annotated = persona::annotate_conversation(view, *options_.extractor);
  if (const auto it = annotated.persona_at_turn.find(seeker_turn); it != annotated.persona_at_turn.end()) {
    s.persona = it->second;
    s.persona_history[seeker_turn] = it->second;
  }

  const std::size_t reply_turn = seeker_turn + 1;
  decode::DecodeConfig cfg = s.overrides.apply(options_.decode);
  cfg.seed = seed ? *seed : default_turn_seed(session_id, reply_turn);
  const decode::GenerationResult g = options_.responder(*model_, s.dialogue, s.persona, cfg, forced);

  TurnMeta meta;
  meta.alpha_used = g.alpha_used;
  meta.forced = g.forced;
  meta.seed = cfg.seed;
  for (std::size_t i = 0; i < g.strategy_ranking.size() && i < 3; ++i) meta.ranking.push_back(g.strategy_ranking[i]);
  s.dialogue.push_back({corpus::Speaker::Supporter, g.text, g.strategy});
  s.turn_meta[reply_turn] = meta;
  s.updated_at_ms = options_.clock();
  store_->put(s);

  TurnResponse r;
  r.session_id = session_id;
  r.turn = reply_turn;
  r.response = g.text;
  r.strategy = g.strategy;
  r.alpha_used = g.alpha_used;
  r.forced = g.forced;
  r.seed = cfg.seed;
  r.persona = s.persona;
  r.top_strategies = meta.ranking;
  return r;
}

}  // namespace esd::service
