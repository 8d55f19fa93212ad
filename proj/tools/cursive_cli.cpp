#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cursive/attention_plot.hpp"
#include "cursive/dataset.hpp"
#include "cursive/error.hpp"
#include "cursive/model/checkpoint.hpp"
#include "cursive/model/train.hpp"
#include "cursive/project.hpp"
#include "cursive/record.hpp"
#include "cursive/render.hpp"
#include "cursive/sampler.hpp"
#include "cursive/service.hpp"
#include "cursive/synth.hpp"
#include "cursive/wordbank.hpp"

namespace fs = std::filesystem;
using namespace cursive;

namespace {

enum Exit : int { kOk = 0, kOther = 1, kUsage = 2, kConfig = 3, kArtifact = 4, kData = 5 };

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) throw ArtifactError("cannot write " + path);
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", what + ": " + e.what());
  }
}

/// JSON array files, or one record per line for `.ndjson`.
std::vector<SampleRecord> read_records(const std::string& path) {
  const std::string text = read_file(path);
  if (fs::path(path).extension() != ".ndjson") return ingest_json(text);
  nlohmann::json doc = nlohmann::json::array();
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) doc.push_back(parse_json(line, path));
  }
  return ingest_document(doc);
}

GeneratedPage read_page(const std::string& path) { return page_from_json(parse_json(read_file(path), path)); }

struct Globals {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  ProjectConfig project() const {
    std::vector<std::string> all = overrides;
    if (seed) {
      all.push_back("seed=" + std::to_string(*seed));
      all.push_back("train.seed=" + std::to_string(*seed));
    }
    if (threads) all.push_back("threads=" + std::to_string(*threads));
    return load_project(config, all);
  }
};

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cursive handwriting transformer toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Project config JSON")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a config value, e.g. --set model.n_blocks=2");
  app.add_option("--seed", g.seed, "Seed for every random choice of the command");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

  // wordbank
  auto* wb = app.add_subcommand("wordbank", "Generate prompt words");
  std::size_t wb_n = 75;
  std::string wb_out;
  wb->add_option("--n", wb_n, "Number of words")->capture_default_str();
  wb->add_option("--out", wb_out, "Output file (default: stdout)");

  // synth
  auto* sy = app.add_subcommand("synth", "Render word-bank words with the synthetic writer");
  std::size_t sy_n = 3500;
  std::string sy_words, sy_out;
  sy->add_option("--n", sy_n, "Number of words to draw from the word bank")->capture_default_str();
  sy->add_option("--words", sy_words, "File with one word per line instead of drawing")->check(CLI::ExistingFile);
  sy->add_option("--out", sy_out, "Records JSON (default: paths.records)");

  // ingest
  auto* in = app.add_subcommand("ingest", "Validate and canonicalize collected samples");
  std::vector<std::string> in_files;
  std::string in_out;
  in->add_option("--in", in_files, "JSON array or .ndjson files")->required();
  in->add_option("--out", in_out, "Merged records JSON (default: paths.records)");

  // build-corpus
  auto* bc = app.add_subcommand("build-corpus", "Split, augment and tokenize records into a training corpus");
  std::string bc_records, bc_out;
  bc->add_option("--records", bc_records, "Records JSON (default: paths.records)");
  bc->add_option("--out", bc_out, "Corpus directory (default: paths.corpus)");

  // train
  auto* tr = app.add_subcommand("train", "Train the model on a corpus");
  std::string tr_corpus, tr_out, tr_resume;
  std::optional<std::int64_t> tr_steps;
  std::optional<double> tr_target;
  tr->add_option("--corpus", tr_corpus, "Corpus directory (default: paths.corpus)");
  tr->add_option("--out", tr_out, "Checkpoint directory (default: paths.checkpoints)");
  tr->add_option("--steps", tr_steps, "Override train.total_steps");
  tr->add_option("--target-loss", tr_target, "Stop once a batch loss falls below this value");
  tr->add_option("--resume", tr_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  // sample
  auto* sa = app.add_subcommand("sample", "Generate handwriting for a text");
  std::string sa_ckpt, sa_text, sa_out, sa_svg;
  double sa_temp = 1.0;
  std::optional<int> sa_max;
  int sa_width = 40;
  sa->add_option("--checkpoint", sa_ckpt, "Checkpoint (default: paths.checkpoint)");
  sa->add_option("--text", sa_text, "Text to write")->required();
  sa->add_option("--temperature", sa_temp, "Softmax temperature")->capture_default_str();
  sa->add_option("--max-tokens", sa_max, "Token budget");
  sa->add_option("--line-width", sa_width, "Characters per line")->capture_default_str();
  sa->add_option("--out", sa_out, "Page JSON")->required();
  sa->add_option("--svg", sa_svg, "Also write the rendered SVG");

  // regen
  auto* rg = app.add_subcommand("regen", "Regenerate selected words of a page");
  std::string rg_ckpt, rg_page, rg_out, rg_svg;
  std::vector<std::size_t> rg_words;
  double rg_temp = 1.0;
  int rg_width = 40;
  rg->add_option("--checkpoint", rg_ckpt, "Checkpoint (default: paths.checkpoint)");
  rg->add_option("--page", rg_page, "Page JSON")->required()->check(CLI::ExistingFile);
  rg->add_option("--words", rg_words, "Word indices, comma separated")->delimiter(',')->required();
  rg->add_option("--temperature", rg_temp, "Softmax temperature")->capture_default_str();
  rg->add_option("--line-width", rg_width, "Characters per line")->capture_default_str();
  rg->add_option("--out", rg_out, "Page JSON")->required();
  rg->add_option("--svg", rg_svg, "Also write the rendered SVG");

  // render
  auto* rd = app.add_subcommand("render", "Render a page as SVG");
  std::string rd_page, rd_out;
  int rd_width = 40;
  rd->add_option("--page", rd_page, "Page JSON")->required()->check(CLI::ExistingFile);
  rd->add_option("--out", rd_out, "SVG file")->required();
  rd->add_option("--line-width", rd_width, "Characters per line")->capture_default_str();

  // attn
  auto* at = app.add_subcommand("attn", "Plot attention maps for a page");
  std::string at_ckpt, at_page, at_out;
  at->add_option("--checkpoint", at_ckpt, "Checkpoint (default: paths.checkpoint)");
  at->add_option("--page", at_page, "Page JSON")->required()->check(CLI::ExistingFile);
  at->add_option("--out", at_out, "Output directory")->required();

  // serve
  auto* sv = app.add_subcommand("serve", "Run the local collection and generation service");
  std::string sv_host = "127.0.0.1", sv_ckpt, sv_store;
  int sv_port = 8080;
  sv->add_option("--host", sv_host, "Bind address")->capture_default_str();
  sv->add_option("--port", sv_port, "Port (0 picks a free one)")->capture_default_str();
  sv->add_option("--checkpoint", sv_ckpt, "Checkpoint (default: paths.checkpoint when it exists)");
  sv->add_option("--store", sv_store, "Sample store (default: paths.store)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const ProjectConfig project = g.project();
    const auto pick = [](const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; };

    if (*wb) {
      std::string text;
      for (const auto& w : generate_bank(project.seed, project.wordbank, wb_n)) text += w + "\n";
      if (wb_out.empty()) {
        std::cout << text;
      } else {
        write_file(wb_out, text);
      }
    } else if (*sy) {
      std::vector<std::string> words;
      if (!sy_words.empty()) {
        std::istringstream lines(read_file(sy_words));
        for (std::string line; std::getline(lines, line);) {
          if (!line.empty()) words.push_back(line);
        }
      } else {
        words = generate_bank(project.seed, project.wordbank, sy_n);
      }
      const GlyphSet glyphs = project.paths.glyphs.empty() ? GlyphSet::builtin() : GlyphSet::load(project.paths.glyphs);
      const auto records = render_words(words, glyphs, project.synth, mix64(project.seed ^ 0x5e17));
      const std::string out = pick(sy_out, project.paths.records);
      write_file(out, export_json(records));
      std::cerr << "wrote " << records.size() << " records to " << out << "\n";
    } else if (*in) {
      std::vector<SampleRecord> all;
      std::size_t free_form = 0;
      for (const auto& f : in_files) {
        for (auto& r : read_records(f)) {
          free_form += r.metadata.value("free_form", false);
          all.push_back(std::move(r));
        }
      }
      const std::string out = pick(in_out, project.paths.records);
      write_file(out, export_json(all));
      std::cerr << "ingested " << all.size() << " records (" << free_form << " free-form) into " << out << "\n";
    } else if (*bc) {
      const auto records = read_records(pick(bc_records, project.paths.records));
      const std::string out = pick(bc_out, project.paths.corpus);
      const auto manifest = write_corpus(out, records, project.corpus_options());
      std::cerr << "corpus " << out << ": " << manifest["counts"].dump() << "\n";
    } else if (*tr) {
      TrainConfig tc = project.train;
      if (tr_steps) tc.total_steps = *tr_steps;
      if (tr_target) tc.target_loss = *tr_target;
      tc.validate();
      const std::string dir = pick(tr_corpus, project.paths.corpus);
      const Corpus corpus = load_corpus(dir);
      const std::string corpus_hash = corpus.manifest.value("data_hash", "");
      if (corpus_hash != project.data_hash()) {
        throw ConfigError("corpus " + dir + " was built with data settings " + corpus_hash +
                          ", this configuration has " + project.data_hash());
      }
      ModelConfig mc = project.model;
      mc.stroke_vocab = corpus.tokenizer.vocab_size();
      TrainOptions opt;
      opt.out_dir = pick(tr_out, project.paths.checkpoints);
      opt.config_hash = project.hash();
      opt.threads = project.resolved_threads();
      if (!tr_resume.empty()) opt.resume = load_checkpoint(tr_resume);
      opt.on_step = [&](const StepLog& s) {
        if (s.test_loss) {
          std::cerr << "step " << s.step << " lr " << s.lr << " train " << s.train_loss << " test " << *s.test_loss
                    << "\n";
        }
      };
      const auto result = train(corpus, mc, tc, opt);
      std::cerr << "finished at step " << result.final_state.step << ", last train loss "
                << (result.log.empty() ? 0.0 : result.log.back().train_loss) << "\n";
    } else if (*sa) {
      const LoadedModel model(load_checkpoint(pick(sa_ckpt, project.paths.checkpoint)));
      const Sampler sampler(model);
      SamplingConfig sc;
      sc.temperature = sa_temp;
      sc.seed = project.seed;
      sc.max_tokens = sa_max.value_or(model.model.config().max_stroke_context);
      const auto page = generate_page(sampler, sa_text, sc, model.config_hash);
      write_file(sa_out, page_to_json(page, sa_width).dump(2) + "\n");
      if (!sa_svg.empty()) {
        SvgOptions opt;
        opt.line_width_chars = sa_width;
        write_file(sa_svg, render_svg(page, opt));
      }
      std::cerr << "wrote " << page.tokens.size() << " tokens" << (page.truncated ? " (truncated)" : "") << "\n";
    } else if (*rg) {
      const LoadedModel model(load_checkpoint(pick(rg_ckpt, project.paths.checkpoint)));
      const Sampler sampler(model);
      const auto page = read_page(rg_page);
      SamplingConfig sc;
      sc.temperature = rg_temp;
      sc.seed = project.seed;
      sc.max_tokens = model.model.config().max_stroke_context - static_cast<int>(page.warmup ? page.warmup->tokens.size() : 0);
      const auto out = regenerate(sampler, page, rg_words, sc);
      write_file(rg_out, page_to_json(out, rg_width).dump(2) + "\n");
      if (!rg_svg.empty()) {
        SvgOptions opt;
        opt.line_width_chars = rg_width;
        write_file(rg_svg, render_svg(out, opt));
      }
    } else if (*rd) {
      SvgOptions opt;
      opt.line_width_chars = rd_width;
      write_file(rd_out, render_svg(read_page(rd_page), opt));
    } else if (*at) {
      const LoadedModel model(load_checkpoint(pick(at_ckpt, project.paths.checkpoint)));
      const auto page = read_page(at_page);
      const auto [ids, ascii] = page_inputs(page);
      const auto maps = extract_attention(model.model, ids, ascii);
      const std::string text = page.warmup ? page.warmup->text + " " + page.text : page.text;
      const auto files = plot_attention(maps, text, at_out);
      std::cerr << "wrote " << files.size() << " heatmaps to " << at_out << "\n";
    } else if (*sv) {
      std::optional<Checkpoint> ckpt;
      const std::string path = pick(sv_ckpt, project.paths.checkpoint);
      if (!sv_ckpt.empty() || fs::exists(path)) ckpt = load_checkpoint(path);
      Service service(project, std::move(ckpt), pick(sv_store, project.paths.store));
      HttpServer server(service);
      const int port = server.bind(sv_host, sv_port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << sv_host << ":" << port << (service.has_model() ? "" : " (no checkpoint)")
                << std::endl;
      server.run();
      g_server = nullptr;
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return kArtifact;
  } catch (const SchemaError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const GrammarError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::out_of_range& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
