#pragma once

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <string>

#include "pathgrpo/mock_judge.hpp"

namespace pathgrpo::cli {

/// Serves the scripted mock until SIGINT or SIGTERM. Signals are blocked in
/// every thread and collected with sigwait, so shutdown happens outside a
/// signal handler.
inline int serve_mock_judge(const std::string& script_path, int port, const std::string& host) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  MockJudgeServer server(load_mock_script(script_path), port, host);
  std::cout << "mock judge listening on " << server.url() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  std::cout << "mock judge stopped after " << server.request_count() << " requests" << std::endl;
  return 0;
}

}  // namespace pathgrpo::cli
