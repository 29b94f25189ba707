#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "supertracy/app.hpp"

namespace supertracy::cli {

inline constexpr const char* kUsage = R"(supertracy - local track-and-trace assistant engine

usage: supertracy [--config <path>] [--seed <u64>] [--json] [--lang <en|nl>] <command> [args]

commands:
  gen-data              generate the synthetic parcel corpus (raw CSV)
  etl                   transform the raw CSV into parcel records and Alpaca data
  train                 train the next-event model and write a checkpoint
  quantize <bits>       write a quantized checkpoint
  lora-finetune         train low-rank adapters on top of the checkpoint
  index                 build the retrieval index from records and catalogs
  story <barcode>       tell the journey story of one parcel
  predict <barcode>     predict the remaining events of one parcel
  ask "<question>"      ask the knowledge expert a question
  eval                  score generated stories for the unhappy-flow sample
  detect-lang "<text>"  detect the language of a text
  chat                  interactive assistant session

flags:
  --config <path>   JSON config file (flags override file values)
  --seed <u64>      global seed governing all sub-seeds
  --json            machine-readable stdout
  --lang <en|nl>    reply language for story/ask/chat

exit codes: 0 success, 1 pipeline failure, 2 usage error.
eval exits 1 when the fraction of stories scoring >= 3 falls under the threshold.
)";

struct CliOptions {
    app::AppConfig config;
    bool json = false;
    LanguageCode lang = LanguageCode::en;
    std::string command;
    std::vector<std::string> args;
};

namespace detail {

inline int usage_error(std::ostream& err, const std::string& message) {
    if (!message.empty()) err << "error: " << message << "\n";
    err << kUsage;
    return 2;
}

inline bool parse_options(const std::vector<std::string>& argv, CliOptions& opts,
                          std::ostream& err, int& exit_code) {
    size_t i = 0;
    std::optional<uint64_t> seed_override;
    while (i < argv.size()) {
        const std::string& a = argv[i];
        if (a == "--config") {
            if (i + 1 >= argv.size()) {
                exit_code = usage_error(err, "--config needs a path");
                return false;
            }
            opts.config = app::load_config(argv[++i]);
        } else if (a == "--seed") {
            if (i + 1 >= argv.size()) {
                exit_code = usage_error(err, "--seed needs a value");
                return false;
            }
            try {
                seed_override = std::stoull(argv[++i]);
            } catch (...) {
                exit_code = usage_error(err, "--seed needs an unsigned integer");
                return false;
            }
        } else if (a == "--json") {
            opts.json = true;
        } else if (a == "--lang") {
            if (i + 1 >= argv.size()) {
                exit_code = usage_error(err, "--lang needs en or nl");
                return false;
            }
            std::string lang = argv[++i];
            if (lang != "en" && lang != "nl") {
                exit_code = usage_error(err, "--lang needs en or nl");
                return false;
            }
            opts.lang = language_from_string(lang);
        } else if (a.rfind("--", 0) == 0) {
            exit_code = usage_error(err, "unknown flag " + a);
            return false;
        } else {
            opts.command = a;
            opts.args.assign(argv.begin() + static_cast<long>(i) + 1, argv.end());
            break;
        }
        ++i;
    }
    if (seed_override) opts.config.seed = *seed_override;
    opts.config.propagate_seed();
    if (opts.command.empty()) {
        exit_code = usage_error(err, "no command given");
        return false;
    }
    return true;
}

inline void ensure_out_dir(const app::AppConfig& config) {
    std::filesystem::create_directories(config.out_dir);
}

inline data_pipeline::RawTable read_raw_csv(const std::string& path) {
    CsvFile f = read_csv(path);
    data_pipeline::RawTable table;
    table.headers = std::move(f.headers);
    table.rows = std::move(f.rows);
    return table;
}

inline std::vector<std::vector<seq_model::EventCode>> sequences_of(
    const std::vector<event_model::ParcelRecord>& records) {
    std::vector<std::vector<seq_model::EventCode>> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        std::vector<seq_model::EventCode> seq;
        for (const auto& ev : rec.events) seq.push_back(ev.code);
        out.push_back(std::move(seq));
    }
    return out;
}

// ---------------------------------------------------------------------------

inline int cmd_gen_data(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto assets = app::load_assets(opts.config);
    auto [table, records] =
        data_pipeline::generate_corpus(opts.config.corpus, assets.taxonomy, assets.locations);
    ensure_out_dir(opts.config);
    std::ofstream csv(opts.config.corpus_csv_path(), std::ios::binary);
    if (!csv) throw IoError("cannot write " + opts.config.corpus_csv_path());
    csv << table.to_csv();
    size_t unhappy = 0, in_progress = 0;
    for (const auto& rec : records) {
        bool has_exception = false;
        for (const auto& ev : rec.events)
            if (assets.taxonomy.lookup(ev.code).category == event_model::Category::Exception)
                has_exception = true;
        if (has_exception) ++unhappy;
        if (!rec.delivered) ++in_progress;
    }
    if (opts.json) {
        nlohmann::json j{{"parcels", records.size()},
                         {"rows", table.rows.size()},
                         {"unhappy", unhappy},
                         {"undelivered", in_progress},
                         {"csv", opts.config.corpus_csv_path()}};
        out << j.dump() << "\n";
    } else {
        out << "generated " << records.size() << " parcels (" << table.rows.size() << " raw rows, "
            << unhappy << " unhappy, " << in_progress << " undelivered) -> "
            << opts.config.corpus_csv_path() << "\n";
    }
    err << "canonical barcode: " << data_pipeline::kCanonicalBarcode << "\n";
    return 0;
}

inline int cmd_etl(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto assets = app::load_assets(opts.config);
    auto table = read_raw_csv(opts.config.corpus_csv_path());
    data_pipeline::TransformReport report;
    auto records = data_pipeline::transform(table, assets.dictionary, &report);
    ensure_out_dir(opts.config);
    {
        std::ofstream jsonl(opts.config.corpus_jsonl_path(), std::ios::binary);
        if (!jsonl) throw IoError("cannot write " + opts.config.corpus_jsonl_path());
        data_pipeline::save_records_jsonl(jsonl, records);
    }
    {
        auto realizer =
            agents::make_story_realizer(assets.taxonomy, assets.locations, assets.templates);
        auto examples = data_pipeline::export_alpaca(records, realizer);
        std::ofstream jsonl(opts.config.alpaca_path(), std::ios::binary);
        if (!jsonl) throw IoError("cannot write " + opts.config.alpaca_path());
        data_pipeline::save_alpaca_jsonl(jsonl, examples);
    }

    // summary statistics over event counts (the reduced statistical analysis)
    std::map<std::string, size_t> category_counts;
    std::vector<size_t> lengths;
    for (const auto& rec : records) {
        lengths.push_back(rec.events.size());
        for (const auto& ev : rec.events)
            category_counts[event_model::to_string(
                assets.taxonomy.lookup(ev.code).category)] += 1;
    }
    std::sort(lengths.begin(), lengths.end());
    size_t median_len = lengths.empty() ? 0 : lengths[lengths.size() / 2];

    if (opts.json) {
        nlohmann::json j{{"rows_in", report.rows_in},
                         {"duplicates_removed", report.duplicates_removed},
                         {"dropped_missing_barcode", report.dropped_missing_barcode},
                         {"parcels", report.parcels},
                         {"median_events_per_parcel", median_len},
                         {"category_counts", category_counts},
                         {"corpus", opts.config.corpus_jsonl_path()},
                         {"alpaca", opts.config.alpaca_path()}};
        out << j.dump() << "\n";
    } else {
        out << "transformed " << report.rows_in << " rows -> " << report.parcels << " parcels ("
            << report.duplicates_removed << " duplicates removed, "
            << report.dropped_missing_barcode << " rows without barcode dropped)\n";
        out << "median events per parcel: " << median_len << "\n";
        for (const auto& [cat, count] : category_counts)
            out << "  " << cat << ": " << count << "\n";
        out << "corpus -> " << opts.config.corpus_jsonl_path() << "\n";
        out << "alpaca export -> " << opts.config.alpaca_path() << "\n";
    }
    (void)err;
    return 0;
}

inline int cmd_train(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto assets = app::load_assets(opts.config);
    auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
    auto splits = data_pipeline::split(records, opts.config.split_ratios, opts.config.seed);
    auto vocab = seq_model::Vocabulary::from_taxonomy(assets.taxonomy);
    auto [params, trace] = seq_model::train(sequences_of(splits.train), sequences_of(splits.val),
                                            opts.config.train, vocab);
    ensure_out_dir(opts.config);
    seq_model::save_checkpoint(opts.config.checkpoint_path(), params, vocab);
    {
        std::ofstream csv(opts.config.losstrace_path(), std::ios::binary);
        if (!csv) throw IoError("cannot write " + opts.config.losstrace_path());
        trace.save_csv(csv);
    }
    if (opts.json) {
        nlohmann::json j{{"steps", trace.losses.size()},
                         {"first_loss", trace.losses.front()},
                         {"final_loss", trace.losses.back()},
                         {"final_moving_avg", trace.moving_avg.back()},
                         {"val_loss", trace.final_val_loss},
                         {"parameters", params.parameter_count()},
                         {"checkpoint", opts.config.checkpoint_path()},
                         {"losstrace", opts.config.losstrace_path()}};
        out << j.dump() << "\n";
    } else {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "trained %zu steps (%zu parameters); loss %.4f -> %.4f (moving avg %.4f), "
                      "val loss %.4f\n",
                      trace.losses.size(), params.parameter_count(), trace.losses.front(),
                      trace.losses.back(), trace.moving_avg.back(), trace.final_val_loss);
        out << buf;
        out << "checkpoint -> " << opts.config.checkpoint_path() << "\n";
        out << "loss trace -> " << opts.config.losstrace_path() << "\n";
    }
    (void)err;
    return 0;
}

inline int cmd_quantize(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    int bits = opts.config.quantize_bits;
    if (!opts.args.empty()) {
        try {
            bits = std::stoi(opts.args[0]);
        } catch (...) {
            return usage_error(err, "quantize needs a numeric bit width");
        }
    }
    auto [params, vocab] = seq_model::load_checkpoint(opts.config.checkpoint_path());
    auto quantized = compress::quantize_model(params, bits);
    ensure_out_dir(opts.config);
    compress::save_quantized(opts.config.quantized_path(), quantized, vocab);
    if (opts.json) {
        nlohmann::json mats;
        for (const auto& [name, m] : quantized.matrices)
            mats[name] = {{"delta", m.delta}, {"w_min", m.w_min}};
        nlohmann::json j{{"bits", bits},
                         {"matrices", mats},
                         {"quantized", opts.config.quantized_path()}};
        out << j.dump() << "\n";
    } else {
        out << "quantized model to " << bits << " bits -> " << opts.config.quantized_path() << "\n";
        for (const auto& [name, m] : quantized.matrices) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "  %-6s delta %.8f, min %.6f\n", name.c_str(), m.delta,
                          m.w_min);
            out << buf;
        }
    }
    return 0;
}

inline int cmd_lora(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto [base, vocab] = seq_model::load_checkpoint(opts.config.checkpoint_path());
    auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
    auto splits = data_pipeline::split(records, opts.config.split_ratios, opts.config.seed);
    auto adapters = compress::LoRAAdapterSet::init(base, opts.config.lora_rank, opts.config.seed);
    auto [trained, trace] = compress::finetune_lora(base, std::move(adapters),
                                                    sequences_of(splits.train), opts.config.train,
                                                    vocab);
    ensure_out_dir(opts.config);
    {
        nlohmann::json j;
        j["format_version"] = 1;
        j["rank"] = trained.rank;
        auto put = [&](const std::string& name, const compress::LoRAAdapter& a) {
            j["adapters"][name] = {{"A", a.A.data()},
                                   {"B", a.B.data()},
                                   {"a_rows", a.A.rows()},
                                   {"b_cols", a.B.cols()},
                                   {"rank", a.rank}};
        };
        for (int h = 0; h < base.n_heads; ++h) {
            put("W_q" + std::to_string(h), trained.q[static_cast<size_t>(h)]);
            put("W_k" + std::to_string(h), trained.k[static_cast<size_t>(h)]);
            put("W_v" + std::to_string(h), trained.v[static_cast<size_t>(h)]);
        }
        put("W_out", trained.out);
        std::ofstream f(opts.config.lora_path(), std::ios::binary);
        if (!f) throw IoError("cannot write " + opts.config.lora_path());
        f << j.dump() << "\n";
    }
    if (opts.json) {
        nlohmann::json j{{"rank", trained.rank},
                         {"trainable_parameters", trained.trainable_parameters()},
                         {"first_loss", trace.losses.front()},
                         {"final_loss", trace.losses.back()},
                         {"adapters", opts.config.lora_path()}};
        out << j.dump() << "\n";
    } else {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "lora rank %d (%zu trainable parameters); loss %.4f -> %.4f\n", trained.rank,
                      trained.trainable_parameters(), trace.losses.front(), trace.losses.back());
        out << buf;
        out << "adapters -> " << opts.config.lora_path() << "\n";
    }
    (void)err;
    return 0;
}

inline int cmd_index(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto assets = app::load_assets(opts.config);
    auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
    data_pipeline::LoadReport report;
    auto index = app::build_index(assets, records, opts.config, nullptr, &report);
    ensure_out_dir(opts.config);
    index.save_jsonl_file(opts.config.index_path());
    if (opts.json) {
        nlohmann::json j{{"chunks", index.size()},
                         {"parcel_chunks", report.chunks},
                         {"duplicate_barcodes", report.duplicate_barcodes},
                         {"index", opts.config.index_path()}};
        out << j.dump() << "\n";
    } else {
        out << "indexed " << index.size() << " chunks (" << report.chunks << " parcel chunks) -> "
            << opts.config.index_path() << "\n";
    }
    (void)err;
    return 0;
}

inline int cmd_story(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.args.empty()) return usage_error(err, "story needs a barcode");
    const std::string& barcode = opts.args[0];
    auto verdict = nl_io::validate_barcode(barcode, opts.config.barcode_grammar);
    if (!verdict.valid) {
        err << "invalid barcode (" << verdict.matched_rule << " check failed)\n";
        return 1;
    }
    auto assets = app::load_assets(opts.config);
    auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
    data_pipeline::JourneyStore store;
    for (const auto& rec : records) store.upsert(rec);
    auto [params, vocab] = seq_model::load_checkpoint(opts.config.checkpoint_path());
    auto story = agents::parcel_reply(to_upper(barcode), store, params, vocab, assets.taxonomy,
                                      assets.locations, assets.templates, opts.config.generation,
                                      opts.config.seed, opts.config.prediction_max_len);
    if (opts.json) {
        out << agents::story_to_json(story).dump() << "\n";
    } else {
        out << story.narrative << "\n";
        if (!story.issues.empty()) {
            out << "\nIssues:\n";
            for (const auto& issue : story.issues) out << "- " << issue << "\n";
        }
        if (!story.predicted_events.empty()) {
            out << "\nPredicted next steps (not yet observed):\n";
            for (const auto& p : story.predicted_events)
                out << "- " << p.code << " " << p.description << "\n";
        }
    }
    return 0;
}

inline int cmd_predict(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.args.empty()) return usage_error(err, "predict needs a barcode");
    auto assets = app::load_assets(opts.config);
    auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
    data_pipeline::JourneyStore store;
    for (const auto& rec : records) store.upsert(rec);
    const auto& record = store.lookup(to_upper(opts.args[0]));
    auto [params, vocab] = seq_model::load_checkpoint(opts.config.checkpoint_path());
    std::vector<seq_model::EventCode> codes;
    for (const auto& ev : record.events) codes.push_back(ev.code);
    auto suffix = seq_model::complete_sequence(codes, params, vocab, assets.taxonomy,
                                               opts.config.prediction_max_len);
    if (opts.json) {
        nlohmann::json j;
        j["barcode"] = record.barcode;
        j["is_prediction"] = true;
        j["codes"] = nlohmann::json::array();
        for (const auto& c : suffix.codes) j["codes"].push_back(c.raw);
        out << j.dump() << "\n";
    } else {
        if (suffix.codes.empty()) {
            out << "journey already complete; nothing to predict\n";
        } else {
            out << "predicted continuation (not yet observed):\n";
            for (const auto& c : suffix.codes)
                out << "- " << c.raw << " " << assets.taxonomy.lookup(c).description << "\n";
        }
    }
    return 0;
}

inline int cmd_ask(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.args.empty()) return usage_error(err, "ask needs a question");
    const std::string& question = opts.args[0];
    auto index = embed_store::VectorIndex::load_jsonl_file(opts.config.index_path());
    auto reply = agents::knowledge_reply(question, index, opts.config.knowledge_k,
                                         opts.config.knowledge_threshold, opts.lang);
    if (opts.json) {
        out << agents::reply_to_json(reply).dump() << "\n";
    } else {
        out << reply.text << "\n";
        if (!reply.citations.empty()) {
            out << "\nSources: ";
            for (size_t i = 0; i < reply.citations.size(); ++i) {
                if (i) out << ", ";
                out << reply.citations[i];
            }
            out << "\n";
        }
    }
    return 0;
}

inline int cmd_eval(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    auto assets = app::load_assets(opts.config);
    auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
    data_pipeline::JourneyStore store;
    for (const auto& rec : records) store.upsert(rec);
    auto [params, vocab] = seq_model::load_checkpoint(opts.config.checkpoint_path());
    auto barcodes = eval_harness::sample_unhappy(records, opts.config.eval_sample, opts.config.seed,
                                                 assets.taxonomy);
    eval_harness::EvalPipeline pipeline{store,          params,
                                        vocab,          assets.taxonomy,
                                        assets.locations, assets.templates,
                                        opts.config.generation, opts.config.seed};
    auto report = eval_harness::run_eval(pipeline, barcodes);
    if (opts.json) {
        out << eval_harness::report_to_json(report).dump() << "\n";
    } else {
        out << eval_harness::report_to_markdown(report);
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "latency per story: mean %.1f ms, max %.1f ms\n",
                  report.mean_latency_ms, report.max_latency_ms);
    err << buf;
    return report.fraction_ge_3 >= opts.config.eval_threshold ? 0 : 1;
}

inline int cmd_detect_lang(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.args.empty()) return usage_error(err, "detect-lang needs a text argument");
    auto profiles = nl_io::LanguageProfiles::load_json_file(opts.config.profiles_path());
    auto result = nl_io::detect_language(opts.args[0], profiles);
    if (opts.json) {
        nlohmann::json j{{"language", to_string(result.language)},
                         {"confidence", result.confidence}};
        out << j.dump() << "\n";
    } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s %.4f\n", to_string(result.language).c_str(),
                      result.confidence);
        out << buf;
    }
    return 0;
}

inline int cmd_chat(const CliOptions& opts, std::istream& in, std::ostream& out,
                    std::ostream& err) {
    auto assets = app::load_assets(opts.config);

    // stores and model are optional in chat; the reception agent covers the
    // rest when the pipeline has not run yet
    data_pipeline::JourneyStore store;
    std::optional<std::pair<seq_model::ModelParams, seq_model::Vocabulary>> model;
    std::optional<embed_store::VectorIndex> index;
    try {
        auto records = data_pipeline::load_records_jsonl_file(opts.config.corpus_jsonl_path());
        for (const auto& rec : records) store.upsert(rec);
    } catch (const std::exception& e) {
        err << "note: no corpus loaded (" << e.what() << ")\n";
    }
    try {
        model = seq_model::load_checkpoint(opts.config.checkpoint_path());
    } catch (const std::exception& e) {
        err << "note: no checkpoint loaded (" << e.what() << ")\n";
    }
    try {
        index = embed_store::VectorIndex::load_jsonl_file(opts.config.index_path());
    } catch (const std::exception& e) {
        err << "note: no index loaded (" << e.what() << ")\n";
    }

    agents::ConversationState state;
    state.detected_language = opts.lang;
    auto terms = assets.abbreviation_terms();

    out << "SuperTracy ready. Type a message, or 'exit' to leave.\n";
    std::string line;
    while (std::getline(in, line)) {
        std::string input = trim(line);
        if (input.empty()) continue;
        if (input == "exit" || input == "quit") break;
        state.history.emplace_back("user", input);

        // single words are too short for trigram detection to be trusted
        auto detection = nl_io::detect_language(input, assets.profiles);
        if (detection.language != LanguageCode::other && detection.confidence >= 0.15 &&
            input.size() >= 8)
            state.detected_language = detection.language;

        agents::AgentId agent = agents::route(input, state, terms, opts.config.barcode_grammar);
        state.active_agent = agent;
        std::string reply_text;
        std::string citations;
        try {
            if (agent == agents::AgentId::Parcel) {
                auto barcode =
                    agents::detail::find_valid_barcode(input, opts.config.barcode_grammar);
                state.last_barcode = barcode;
                if (!model || !store.contains(*barcode)) {
                    agents::ConversationState reception_state = state;
                    auto reply = agents::reception_reply("barcode " + *barcode, reception_state,
                                                         assets.templates,
                                                         opts.config.barcode_grammar);
                    reply_text = store.contains(*barcode)
                                     ? reply.text
                                     : "I could not find a parcel with barcode " + *barcode +
                                           ". Here is how to find a valid barcode: check the "
                                           "shipping confirmation email or the label.";
                } else {
                    auto story = agents::parcel_reply(*barcode, store, model->first, model->second,
                                                      assets.taxonomy, assets.locations,
                                                      assets.templates, opts.config.generation,
                                                      opts.config.seed,
                                                      opts.config.prediction_max_len);
                    reply_text = story.narrative;
                }
            } else if (agent == agents::AgentId::KnowledgeExpert && index && !index->empty()) {
                auto reply = agents::knowledge_reply(input, *index, opts.config.knowledge_k,
                                                     opts.config.knowledge_threshold,
                                                     state.detected_language);
                reply_text = reply.text;
                for (size_t i = 0; i < reply.citations.size(); ++i)
                    citations += (i ? ", " : "") + reply.citations[i];
            } else {
                auto reply = agents::reception_reply(input, state, assets.templates,
                                                     opts.config.barcode_grammar);
                reply_text = reply.text;
            }
        } catch (const std::exception& e) {
            reply_text = std::string(agents::fallback_text(state.detected_language)) +
                         " (internal note: " + e.what() + ")";
        }
        state.history.emplace_back(prompt_factory::to_string(agent), reply_text);
        out << "[" << prompt_factory::to_string(agent) << "] " << reply_text << "\n";
        if (!citations.empty()) out << "  sources: " << citations << "\n";
    }
    return 0;
}

}  // namespace detail

// Entry point shared by the binary and the tests.
inline int run(const std::vector<std::string>& argv, std::istream& in, std::ostream& out,
               std::ostream& err) {
    CliOptions opts;
    int exit_code = 0;
    if (!detail::parse_options(argv, opts, err, exit_code)) return exit_code;

    try {
        const std::string& cmd = opts.command;
        if (cmd == "gen-data") return detail::cmd_gen_data(opts, out, err);
        if (cmd == "etl") return detail::cmd_etl(opts, out, err);
        if (cmd == "train") return detail::cmd_train(opts, out, err);
        if (cmd == "quantize") return detail::cmd_quantize(opts, out, err);
        if (cmd == "lora-finetune") return detail::cmd_lora(opts, out, err);
        if (cmd == "index") return detail::cmd_index(opts, out, err);
        if (cmd == "story") return detail::cmd_story(opts, out, err);
        if (cmd == "predict") return detail::cmd_predict(opts, out, err);
        if (cmd == "ask") return detail::cmd_ask(opts, out, err);
        if (cmd == "eval") return detail::cmd_eval(opts, out, err);
        if (cmd == "detect-lang") return detail::cmd_detect_lang(opts, out, err);
        if (cmd == "chat") return detail::cmd_chat(opts, in, out, err);
        return detail::usage_error(err, "unknown command " + cmd);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cin, std::cout, std::cerr);
}

}  // namespace supertracy::cli
