#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "pragnav/pragnav.h"

namespace {

int report(pragnav_status st) {
  if (st == PRAGNAV_OK) return 0;
  std::fprintf(stderr, "pragnav: error %d: %s\n", static_cast<int>(st), pragnav_last_error());
  return 1;
}

struct RunArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pragmatic instruction generation for navigation worlds"};
  app.set_version_flag("--version", pragnav_version());
  app.require_subcommand(1);

  const char* commands[][2] = {
      {"build", "Generate worlds and the reference corpus"},
      {"train", "Train the base speaker and the listener ensemble"},
      {"eval", "Evaluate speaker systems with a simulated listener"},
      {"ppg", "Prospective performance gain of the search and pragmatic oracles"},
      {"gamma", "Estimate the greedy-vs-sample win rate"},
      {"shift", "Covariate shift report over listeners and speaker systems"},
      {"ablate", "Ensemble-size ablation of the pragmatic speaker"},
  };

  RunArgs run;
  std::string ran;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("config", run.config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", run.seed, "Random seed")->default_val(0);
    sub->add_option("--out", run.out, "Report output path")->required();
    sub->callback([&ran, name = std::string(c[0])] { ran = name; });
  }

  std::string data_root;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve human listener sessions over HTTP");
  serve->add_option("--port", port, "TCP port (0 picks a free one)")->default_val(8080)->check(CLI::Range(0, 65535));
  serve->add_option("--data-root", data_root, "Data root directory");
  serve->add_option("--host", host, "Bind address")->default_val("127.0.0.1");

  CLI11_PARSE(app, argc, argv);

  if (serve->parsed()) {
    std::fprintf(stderr, "pragnav: serving on %s:%d\n", host.c_str(), port);
    return report(pragnav_server_run(data_root.empty() ? nullptr : data_root.c_str(), host.c_str(), port));
  }

  char* run_id = nullptr;
  const int rc = report(pragnav_run(ran.c_str(), run.config.c_str(), run.seed, run.out.c_str(), &run_id));
  if (rc == 0) {
    std::printf("%s %s\n", run_id, run.out.c_str());
    pragnav_string_free(run_id);
  }
  return rc;
}
