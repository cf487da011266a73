// esd: command-line front end for corpus preparation, training, decoding,
// evaluation, analysis and the chat service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "esd/checkpoint.hpp"
#include "esd/corpus.hpp"
#include "esd/correlation.hpp"
#include "esd/decode.hpp"
#include "esd/embedder.hpp"
#include "esd/error.hpp"
#include "esd/evaluate.hpp"
#include "esd/examples.hpp"
#include "esd/kv_config.hpp"
#include "esd/persona.hpp"
#include "esd/service/chat_service.hpp"
#include "esd/service/http_server.hpp"
#include "esd/synth.hpp"
#include "esd/train.hpp"
#include "esd/vocab.hpp"

namespace {

using namespace esd;

void write_text(const std::string& path, const std::string& body) {
  if (path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << body;
}

// Values from the config file become defaults; an explicit flag wins.
template <typename T>
void from_config(const KvConfig& cfg, const std::string& key, CLI::Option* opt, T& value) {
  if (opt->count() > 0 || !cfg.has(key)) return;
  if constexpr (std::is_same_v<T, std::string>) {
    value = *cfg.get(key);
  } else if constexpr (std::is_same_v<T, bool>) {
    value = cfg.get_bool(key, value);
  } else if constexpr (std::is_floating_point_v<T>) {
    value = cfg.get_double(key, value);
  } else {
    value = static_cast<T>(cfg.get_int(key, static_cast<long long>(value)));
  }
}

struct DecodeFlags {
  int top_k = 10;
  double top_p = 0.9;
  double temperature = 0.5;
  double repetition_penalty = 1.03;
  int max_new_tokens = 40;
  double alpha = -1.0;  // < 0: use the strategy table
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts.push_back(app->add_option("--top-k", top_k, "top-k cutoff")->capture_default_str());
    opts.push_back(app->add_option("--top-p", top_p, "nucleus mass")->capture_default_str());
    opts.push_back(app->add_option("--temperature", temperature, "sampling temperature")->capture_default_str());
    opts.push_back(
        app->add_option("--repetition-penalty", repetition_penalty, "repetition penalty")->capture_default_str());
    opts.push_back(app->add_option("--max-new-tokens", max_new_tokens, "response length cap")->capture_default_str());
    opts.push_back(app->add_option("--alpha", alpha, "fixed persona emphasis for every strategy (default: table)"));
  }

  void merge(const KvConfig& cfg) {
    from_config(cfg, "decode.top_k", opts[0], top_k);
    from_config(cfg, "decode.top_p", opts[1], top_p);
    from_config(cfg, "decode.temperature", opts[2], temperature);
    from_config(cfg, "decode.repetition_penalty", opts[3], repetition_penalty);
    from_config(cfg, "decode.max_new_tokens", opts[4], max_new_tokens);
    from_config(cfg, "decode.alpha", opts[5], alpha);
  }

  decode::DecodeConfig build(std::uint64_t seed) const {
    decode::DecodeConfig c;
    c.top_k = top_k;
    c.top_p = top_p;
    c.temperature = temperature;
    c.repetition_penalty = repetition_penalty;
    c.max_new_tokens = max_new_tokens;
    c.seed = seed;
    if (alpha >= 0.0) c.alpha_override = alpha;
    c.validate();
    return c;
  }
};

std::vector<corpus::Utterance> alternating(const std::vector<std::string>& lines) {
  std::vector<corpus::Utterance> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out.push_back({i % 2 == 0 ? corpus::Speaker::Seeker : corpus::Speaker::Supporter, lines[i], std::nullopt});
  }
  return out;
}

// A list of utterances or sentences from a file: a JSON array of strings, a
// JSON array of {"text": ...} objects, an object with a "turns" array, or
// plain text with one entry per non-empty line.
std::vector<std::string> read_entries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string body = ss.str();
  const nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  std::vector<std::string> out;
  if (!j.is_discarded() && (j.is_array() || j.is_object())) {
    const nlohmann::json& arr = j.is_object() ? j.at("turns") : j;
    for (const auto& e : arr) out.push_back(e.is_string() ? e.get<std::string>() : e.at("text").get<std::string>());
    return out;
  }
  std::string line;
  std::istringstream lines(body);
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  }
  return out;
}

void run_chat_repl(service::ChatService& svc) {
  const service::Session s = svc.create_session();
  std::cout << "session " << s.id << " (empty line or Ctrl-D to quit)\n";
  std::string line;
  while (std::cout << "you> " << std::flush, std::getline(std::cin, line)) {
    if (line.find_first_not_of(" \t") == std::string::npos) break;
    const service::TurnResponse r = svc.chat_turn(s.id, line);
    std::cout << "bot [" << corpus::display_name(r.strategy) << ", alpha=" << r.alpha_used << "]> " << r.response
              << "\n";
    if (!r.persona.empty()) std::cout << "     persona: " << r.persona.joined() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persona-aware, strategy-controlled emotional-support dialogue toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value preset file; flags override it");

  // corpus synth | split
  auto* corpus_cmd = app.add_subcommand("corpus", "create or split corpora");
  corpus_cmd->require_subcommand(1);
  corpus::SynthConfig synth_cfg;
  std::string synth_out = "-";
  auto* synth = corpus_cmd->add_subcommand("synth", "write a synthetic corpus");
  auto* o_sy_n = synth->add_option("--n", synth_cfg.n_conversations, "conversations")->capture_default_str();
  auto* o_sy_turns =
      synth->add_option("--turns", synth_cfg.n_turns, "utterances per conversation")->capture_default_str();
  auto* o_sy_words =
      synth->add_option("--persona-words", synth_cfg.vocab_seed_words, "distinct persona words")->capture_default_str();
  auto* o_sy_seed = synth->add_option("--seed", synth_cfg.seed, "seed")->capture_default_str();
  auto* o_sy_out = synth->add_option("--out", synth_out, "output file ('-' for stdout)")->capture_default_str();

  std::string split_in, split_dir = ".", ratio = "7:2:1";
  std::uint64_t split_seed = 0;
  auto* split = corpus_cmd->add_subcommand("split", "split by conversation into train/valid/test");
  split->add_option("--in", split_in, "corpus file")->required();
  split->add_option("--out-dir", split_dir, "directory for train.json, valid.json, test.json")->capture_default_str();
  split->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();
  split->add_option("--ratio", ratio, "train:valid:test parts")->capture_default_str();

  // annotate
  std::string ann_in, ann_out = "-", ann_extractor = "rule", audit_out;
  std::size_t audit_n = 0;
  std::uint64_t audit_seed = 0;
  auto* annotate = app.add_subcommand("annotate", "add per-turn persona snapshots (PESConv)");
  annotate->add_option("--in,--corpus", ann_in, "corpus file")->required();
  annotate->add_option("--out", ann_out, "PESConv output")->capture_default_str();
  annotate->add_option("--extractor", ann_extractor, "persona extractor")->capture_default_str();
  annotate->add_option("--audit-n", audit_n, "also export this many sentences for manual audit");
  annotate->add_option("--audit-out", audit_out, "audit sample file");
  annotate->add_option("--audit-seed", audit_seed, "audit sampling seed");

  // train
  std::string tr_train, tr_valid, tr_ckpt, tr_report, preset_name = "desk";
  int epochs = -1;
  double lr = -1.0;
  std::uint64_t tr_seed = 0;
  std::size_t vocab_size = 5000;
  model::ModelConfig mcfg;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::uint64_t tr_split_seed = 0;
  train_cmd->add_option("--corpus,--train", tr_train, "training corpus")->required();
  train_cmd->add_option("--valid", tr_valid,
                        "validation corpus (default: split --corpus 7:2:1 and use its train and valid parts)");
  train_cmd->add_option("--split-seed", tr_split_seed, "seed for that split")->capture_default_str();
  train_cmd->add_option("--out,--ckpt", tr_ckpt, "checkpoint to write")->required();
  train_cmd->add_option("--report", tr_report, "per-epoch CSV report (default: <checkpoint>.csv)");
  auto* o_preset = train_cmd->add_option("--preset", preset_name, "desk | paper")->capture_default_str();
  auto* o_epochs = train_cmd->add_option("--epochs", epochs, "override the preset's epochs");
  auto* o_lr = train_cmd->add_option("--lr", lr, "override the preset's learning rate");
  auto* o_seed = train_cmd->add_option("--seed", tr_seed, "seed for init and shuffling")->capture_default_str();
  auto* o_vocab = train_cmd->add_option("--vocab-size", vocab_size, "vocabulary cap")->capture_default_str();
  auto* o_d = train_cmd->add_option("--d-model", mcfg.d_model)->capture_default_str();
  auto* o_h = train_cmd->add_option("--heads", mcfg.n_heads)->capture_default_str();
  auto* o_l = train_cmd->add_option("--layers", mcfg.n_layers)->capture_default_str();
  auto* o_ff = train_cmd->add_option("--d-ff", mcfg.d_ff)->capture_default_str();
  auto* o_ml = train_cmd->add_option("--max-len", mcfg.max_len)->capture_default_str();

  // generate
  std::string gen_ckpt, gen_strategy, gen_trace;
  std::string gen_dialogue_file, gen_persona_file;
  std::vector<std::string> gen_turns, gen_persona;
  bool gen_extract = false, gen_trace_dists = false;
  std::uint64_t gen_seed = 0;
  DecodeFlags gen_flags;
  auto* generate = app.add_subcommand("generate", "generate one supporter reply");
  generate->add_option("--ckpt", gen_ckpt, "checkpoint")->required();
  auto* o_dialogue = generate->add_option("--dialogue", gen_dialogue_file,
                                          "file of dialogue utterances, seeker first, alternating");
  auto* o_turn = generate->add_option("--turn", gen_turns, "inline utterance (repeatable) instead of --dialogue");
  o_dialogue->excludes(o_turn);
  generate->add_option("--persona", gen_persona_file, "file of persona sentences");
  generate->add_option("--persona-sentence", gen_persona, "inline persona sentence (repeatable)");
  generate->add_flag("--extract-persona", gen_extract, "infer the persona from the seeker turns");
  generate->add_option("--strategy", gen_strategy, "force a strategy");
  generate->add_option("--seed", gen_seed, "sampling seed")->capture_default_str();
  generate->add_option("--trace", gen_trace, "write a JSON decoding trace");
  generate->add_flag("--trace-distributions", gen_trace_dists, "include every step's sampling distribution in the trace");
  gen_flags.add(generate);

  // evaluate
  std::string ev_ckpt, ev_corpus, ev_out = "-", ev_items;
  std::uint64_t ev_seed = 0;
  DecodeFlags ev_flags;
  auto* evaluate = app.add_subcommand("evaluate", "automatic metrics on a test corpus");
  evaluate->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  evaluate->add_option("--corpus", ev_corpus, "corpus or PESConv file")->required();
  evaluate->add_option("--seed", ev_seed, "base seed")->capture_default_str();
  evaluate->add_option("--out", ev_out, "report JSON")->capture_default_str();
  evaluate->add_option("--items", ev_items, "per-item generations JSON");
  ev_flags.add(evaluate);

  // analyze
  std::string an_corpus, an_out = "-";
  auto* analyze = app.add_subcommand("analyze", "persona/response similarity against conversation scores");
  analyze->add_option("--corpus", an_corpus, "PESConv file")->required();
  analyze->add_option("--out", an_out, "CSV output")->capture_default_str();

  // serve / chat
  std::string sv_ckpt, sv_store = "sessions", sv_host = "127.0.0.1";
  int sv_port = 8080;
  DecodeFlags sv_flags;
  auto* serve = app.add_subcommand("serve", "HTTP chat service");
  auto* o_sv_ckpt = serve->add_option("--ckpt", sv_ckpt, "checkpoint");
  auto* o_sv_port = serve->add_option("--port", sv_port, "port")->capture_default_str();
  auto* o_sv_store = serve->add_option("--store", sv_store, "session directory")->capture_default_str();
  auto* o_sv_host = serve->add_option("--host", sv_host, "bind address")->capture_default_str();
  sv_flags.add(serve);

  std::string ch_ckpt, ch_store;
  DecodeFlags ch_flags;
  auto* chat = app.add_subcommand("chat", "terminal chat");
  chat->add_option("--ckpt", ch_ckpt, "checkpoint")->required();
  chat->add_option("--store", ch_store, "session directory (default: in memory)");
  ch_flags.add(chat);

  CLI11_PARSE(app, argc, argv);

  try {
    KvConfig cfg;
    if (!config_path.empty()) cfg = KvConfig::load(config_path);

    if (synth->parsed()) {
      from_config(cfg, "synth.n", o_sy_n, synth_cfg.n_conversations);
      from_config(cfg, "synth.turns", o_sy_turns, synth_cfg.n_turns);
      from_config(cfg, "synth.persona_words", o_sy_words, synth_cfg.vocab_seed_words);
      from_config(cfg, "synth.seed", o_sy_seed, synth_cfg.seed);
      from_config(cfg, "synth.out", o_sy_out, synth_out);
      write_text(synth_out, corpus::to_json(corpus::generate_synthetic(synth_cfg)).dump(2) + "\n");
    } else if (split->parsed()) {
      int a = 0, b = 0, c = 0;
      if (std::sscanf(ratio.c_str(), "%d:%d:%d", &a, &b, &c) != 3) throw InvalidArgument("--ratio must be a:b:c");
      const auto parts = corpus::split_corpus(corpus::load_corpus(split_in), split_seed, a, b, c);
      std::filesystem::create_directories(split_dir);
      corpus::save_corpus(parts.train, std::filesystem::path(split_dir) / "train.json");
      corpus::save_corpus(parts.valid, std::filesystem::path(split_dir) / "valid.json");
      corpus::save_corpus(parts.test, std::filesystem::path(split_dir) / "test.json");
      std::cerr << "train " << parts.train.size() << ", valid " << parts.valid.size() << ", test "
                << parts.test.size() << "\n";
    } else if (annotate->parsed()) {
      const auto extractor = persona::make_extractor(ann_extractor);
      const auto annotated = persona::annotate_corpus(corpus::load_corpus(ann_in), *extractor);
      write_text(ann_out, persona::pesconv_to_json(annotated).dump(2) + "\n");
      if (audit_n > 0) {
        if (audit_out.empty()) throw InvalidArgument("--audit-n needs --audit-out");
        write_text(audit_out,
                   persona::audit_to_json(persona::export_audit_sample(annotated, audit_n, audit_seed)).dump(2) + "\n");
      }
    } else if (train_cmd->parsed()) {
      from_config(cfg, "train.preset", o_preset, preset_name);
      train::TrainConfig tcfg = train::preset(preset_name);
      from_config(cfg, "train.epochs", o_epochs, epochs);
      from_config(cfg, "train.lr", o_lr, lr);
      from_config(cfg, "train.seed", o_seed, tr_seed);
      from_config(cfg, "train.vocab_size", o_vocab, vocab_size);
      from_config(cfg, "model.d_model", o_d, mcfg.d_model);
      from_config(cfg, "model.n_heads", o_h, mcfg.n_heads);
      from_config(cfg, "model.n_layers", o_l, mcfg.n_layers);
      from_config(cfg, "model.d_ff", o_ff, mcfg.d_ff);
      from_config(cfg, "model.max_len", o_ml, mcfg.max_len);
      if (epochs >= 0) tcfg.epochs = epochs;
      if (lr > 0.0) tcfg.lr_base = lr;
      tcfg.seed = tr_seed;
      corpus::Corpus train_corpus = corpus::load_corpus(tr_train);
      corpus::Corpus valid_corpus;
      if (tr_valid.empty()) {
        auto parts = corpus::split_corpus(train_corpus, tr_split_seed);
        train_corpus = std::move(parts.train);
        valid_corpus = std::move(parts.valid);
        std::cerr << "split: train " << train_corpus.size() << ", valid " << valid_corpus.size() << "\n";
      } else {
        valid_corpus = corpus::load_corpus(tr_valid);
      }
      mcfg.vocab = corpus::build_vocab(train_corpus, vocab_size);
      mcfg.seed = tr_seed;
      const model::Model init(mcfg);
      const persona::RuleExtractor extractor;
      const auto result = train::train(init, train_corpus, valid_corpus, tcfg, extractor, [](const train::EpochRecord& r) {
        std::fprintf(stderr, "epoch %d  train %.6f  valid %.6f\n", r.epoch, r.train_loss, r.valid_loss);
      });
      model::save_checkpoint(result.best, tr_ckpt);
      write_text(tr_report.empty() ? tr_ckpt + ".csv" : tr_report, result.report.to_csv());
      std::cerr << "selected epoch " << result.report.selected_epoch << "\n";
    } else if (generate->parsed()) {
      gen_flags.merge(cfg);
      const model::Model m = model::load_checkpoint(gen_ckpt);
      if (!gen_dialogue_file.empty()) gen_turns = read_entries(gen_dialogue_file);
      if (gen_turns.empty()) throw InvalidArgument("generate needs --dialogue or at least one --turn");
      if (!gen_persona_file.empty()) {
        auto from_file = read_entries(gen_persona_file);
        gen_persona.insert(gen_persona.begin(), from_file.begin(), from_file.end());
      }
      const auto dialogue = alternating(gen_turns);
      persona::PersonaSet persona;
      if (gen_extract) {
        corpus::Conversation conv;
        conv.turns = dialogue;
        persona = persona::annotate_conversation(conv, persona::RuleExtractor{}).persona_before(dialogue.size());
      }
      for (const auto& p : gen_persona) persona.add(p, 0);
      std::optional<corpus::Strategy> forced;
      if (!gen_strategy.empty()) {
        forced = corpus::parse_strategy(gen_strategy);
        if (!forced) throw InvalidArgument("unknown strategy '" + gen_strategy + "'");
      }
      decode::GenerateOptions opts;
      opts.trace = !gen_trace.empty();
      opts.trace_distributions = opts.trace && gen_trace_dists;
      const auto r = decode::generate(m, dialogue, persona, gen_flags.build(gen_seed), forced, opts);
      std::cout << "[" << corpus::display_name(r.strategy) << ", alpha=" << r.alpha_used << "] " << r.text << "\n";
      if (!gen_trace.empty()) write_text(gen_trace, decode::trace_to_json(r, m.vocab()).dump(2) + "\n");
    } else if (evaluate->parsed()) {
      ev_flags.merge(cfg);
      const model::Model m = model::load_checkpoint(ev_ckpt);
      std::ifstream in(ev_corpus);
      if (!in) throw NotFound("cannot open " + ev_corpus);
      const nlohmann::json j = nlohmann::json::parse(in);
      std::vector<model::GoldTurn> gold;
      const persona::RuleExtractor extractor;
      if (!j.at("conversations").empty() && j.at("conversations").at(0).contains("persona_at_turn")) {
        gold = model::gold_turns(persona::pesconv_from_json(j));
      } else {
        gold = model::gold_turns(corpus::corpus_from_json(j), extractor);
      }
      const auto embedder = metrics::make_default_embedder();
      const auto ev = metrics::evaluate(m, gold, ev_flags.build(ev_seed), *embedder);
      write_text(ev_out, ev.report.to_json().dump(2) + "\n");
      if (!ev_items.empty()) write_text(ev_items, metrics::items_to_json(ev.items).dump(2) + "\n");
    } else if (analyze->parsed()) {
      const auto embedder = metrics::make_default_embedder();
      const auto report = metrics::correlation_analysis(persona::load_pesconv(an_corpus), *embedder);
      write_text(an_out, report.to_csv());
      if (!report.skipped.empty()) std::cerr << report.skipped.size() << " conversations had no persona\n";
    } else if (serve->parsed()) {
      from_config(cfg, "serve.ckpt", o_sv_ckpt, sv_ckpt);
      from_config(cfg, "serve.port", o_sv_port, sv_port);
      from_config(cfg, "serve.store", o_sv_store, sv_store);
      from_config(cfg, "serve.host", o_sv_host, sv_host);
      sv_flags.merge(cfg);
      if (sv_ckpt.empty()) throw InvalidArgument("serve needs --ckpt");
      auto m = std::make_shared<const model::Model>(model::load_checkpoint(sv_ckpt));
      service::ServiceOptions opts;
      opts.decode = sv_flags.build(0);
      opts.checkpoint_name = std::filesystem::path(sv_ckpt).filename().string();
      service::ChatService svc(m, std::make_shared<service::FileSessionStore>(sv_store), opts);
      service::HttpServer server(svc);
      const int port = server.start(sv_host, sv_port);
      std::cerr << "listening on http://" << sv_host << ":" << port << "\n";
      server.wait();
    } else if (chat->parsed()) {
      ch_flags.merge(cfg);
      auto m = std::make_shared<const model::Model>(model::load_checkpoint(ch_ckpt));
      std::shared_ptr<service::SessionStore> store;
      if (ch_store.empty()) {
        store = std::make_shared<service::MemorySessionStore>();
      } else {
        store = std::make_shared<service::FileSessionStore>(ch_store);
      }
      service::ServiceOptions opts;
      opts.decode = ch_flags.build(0);
      service::ChatService svc(m, store, opts);
      run_chat_repl(svc);
    }
  } catch (const std::exception& e) {
    std::cerr << "esd: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
