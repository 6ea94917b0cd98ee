#pragma once

// In-process ProcessJudge doubles.

#include <atomic>
#include <string>

#include "pathgrpo/reward.hpp"

namespace testsupport {

/// Fixed scores; counts calls.
struct CountingJudge : pathgrpo::ProcessJudge {
  double integrity = 1.0, knowledge = 1.0;
  std::atomic<int> calls{0};
  CountingJudge(double i = 1.0, double k = 1.0) : integrity(i), knowledge(k) {}
  pathgrpo::JudgeResult judge(const pathgrpo::JudgeRequest&) override {
    ++calls;
    pathgrpo::JudgeVerdict v;
    v.integrity_raw = v.integrity = integrity;
    v.knowledge_raw = v.knowledge = knowledge;
    return v;
  }
};

/// Fails every `period`-th call (period 1: always).
struct FlakyJudge : pathgrpo::ProcessJudge {
  int period = 1;
  std::atomic<int> calls{0};
  explicit FlakyJudge(int p) : period(p) {}
  pathgrpo::JudgeResult judge(const pathgrpo::JudgeRequest&) override {
    const int n = ++calls;
    if (n % period == 0) return pathgrpo::JudgeFailure{pathgrpo::JudgeErrorKind::timeout, "scripted", 1};
    pathgrpo::JudgeVerdict v;
    v.integrity = v.knowledge = v.integrity_raw = v.knowledge_raw = 1.0;
    return v;
  }
};

}  // namespace testsupport
