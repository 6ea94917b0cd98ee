#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mock_server_main.hpp"
#include "pathgrpo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"judge-mock: scripted chat-completions judge"};
  std::string script;
  std::string host = "127.0.0.1";
  int port = 8089;
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--script", script, "mock script (JSON array)")->required();
  app.add_option("--host", host)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  return pathgrpo::cli::guarded(
      [&] {
        pathgrpo::cli::require_file(script, "mock script");
        return pathgrpo::cli::serve_mock_judge(script, port, host);
      },
      std::cerr);
}
