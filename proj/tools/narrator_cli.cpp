#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "narrator/app.hpp"
#include "narrator/error.hpp"

namespace {

narrator::app::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace narrator;
  CLI::App cli{"Historical role-play narrator: play, serve and analyze protocols"};
  cli.require_subcommand(1);
  std::string config_path = "narrator.json";
  cli.add_option("-c,--config", config_path, "configuration file")->capture_default_str();

  auto* models = cli.add_subcommand("models", "list configured model labels");

  auto* serve = cli.add_subcommand("serve", "run the HTTP play API");
  std::string bind;
  int port = -1;
  serve->add_option("--bind", bind, "bind address (overrides config)");
  serve->add_option("--port", port, "port (overrides config, 0 = any)");

  auto* play = cli.add_subcommand("play", "play a game in the terminal");
  std::string play_model;
  play->add_option("-m,--model", play_model, "model label")->required();

  auto* analyze = cli.add_subcommand("analyze", "run an analysis step over the corpus");
  std::string sub;
  app::AnalyzeOptions aopts;
  std::string intros, cache;
  analyze->add_option("step", sub, "summary|embed|dissim|pca|wordstats|ner|sentiment")
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(std::begin(app::kAnalyzeSubcommands),
                                                     std::end(app::kAnalyzeSubcommands))));
  analyze->add_option("-o,--out", aopts.out_dir, "output directory")->capture_default_str();
  analyze->add_option("--intros", intros, "JSON file of labeled intros instead of the store");
  analyze->add_option("--cache", cache, "embedding cache directory (default <store>/embeddings)");
  analyze->add_flag("--include-options", aopts.include_options, "keep option lines in intros");
  analyze->add_option("--threshold", aopts.threshold, "response threshold for per-model usage")->capture_default_str();

  auto* exp = cli.add_subcommand("export", "export protocols and intros");
  std::string export_dir = "export";
  bool export_options = false;
  exp->add_option("-o,--out", export_dir, "output directory")->capture_default_str();
  exp->add_flag("--include-options", export_options, "keep option lines in intros");

  auto* crit = cli.add_subcommand("critique", "ask a model to review a finalized protocol");
  std::string crit_session, crit_model;
  std::string crit_instruction(app::kDefaultCritiqueInstruction);
  crit->add_option("-s,--session", crit_session, "session id")->required();
  crit->add_option("-m,--critic", crit_model, "critic model label")->required();
  crit->add_option("-i,--instruction", crit_instruction, "instruction appended to the protocol");

  CLI11_PARSE(cli, argc, argv);

  try {
    app::Config config = app::load_config(config_path);
    if (!bind.empty()) config.server.bind = bind;
    if (port >= 0) config.server.port = port;
    app::App application(std::move(config));

    if (*models) {
      for (const auto& label : app::list_models(application.config())) std::cout << label << "\n";
    } else if (*serve) {
      app::PlayService service(application);
      app::HttpServer server(service);
      const int bound = server.bind(application.config().server.bind, application.config().server.port);
      std::cerr << "listening on " << application.config().server.bind << ":" << bound << "\n";
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    } else if (*play) {
      const auto r = app::play(application, play_model, std::cin, std::cout);
      std::cout << "session " << r.session_id << ": " << r.state.name() << " after " << r.choices << " choices\n";
    } else if (*analyze) {
      if (!intros.empty()) aopts.intros_file = intros;
      if (!cache.empty()) aopts.cache_dir = cache;
      for (const auto& f : app::analyze(application, sub, aopts, std::cerr)) std::cout << f.string() << "\n";
    } else if (*exp) {
      for (const auto& f : app::export_corpus(application, export_dir, export_options, std::cerr)) {
        std::cout << f.string() << "\n";
      }
    } else if (*crit) {
      const auto c = app::critique(application, crit_session, crit_model, crit_instruction);
      std::cout << c.text << "\n";
      if (c.self_critique) std::cerr << "note: critic is the narrating model\n";
    }
  } catch (const narrator::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
