#pragma once

// Streaming / distributed / asynchronous posterior updating, generic over a
// batch approximation primitive. A primitive maps (minibatch, prior
// parameters) to posterior parameters in the same exponential family; the
// engine composes it three ways:
//
//   run_sequential     q_b = prim(C_b, q_{b-1})
//   run_parallel_sync  rounds of `workers` batches against one snapshot,
//                      folded xi_0 + sum_b (xi_b - xi_0) in batch order
//   run_async          workers snapshot the master posterior, compute a
//                      delta, and the master applies deltas serially in
//                      arrival order
//
// A report whose snapshot is still current is applied by installing the
// worker's posterior directly (identical algebra, and it makes the
// one-worker modes reduce to sequential streaming bit-for-bit).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <concepts>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "ldastream/corpus.hpp"
#include "ldastream/expfam.hpp"

namespace ldastream {

template <typename P>
concept ApproxPrimitive = requires(P& p, const Minibatch& b, const Matrix& prior) {
  { p(b, prior) } -> std::convertible_to<Matrix>;
};

template <typename S>
concept BatchSource = requires(S& s) {
  { s.next() } -> std::same_as<std::optional<Minibatch>>;
};

struct ProgressEvent {
  double wall_seconds = 0.0;
  std::uint64_t batches_applied = 0;
  std::uint64_t tokens_applied = 0;
  std::uint64_t snapshot_lag = 0;  // deltas applied since this report's snapshot
};

// Called after every applied delta, while the master state is consistent;
// `posterior` is only valid for the duration of the call.
using ProgressHook = std::function<void(const ProgressEvent&, const Matrix& posterior)>;

struct MasterState {
  Matrix xi_post;
  std::uint64_t batches_applied = 0;
  std::uint64_t tokens_applied = 0;
  std::uint64_t version = 0;  // one tick per applied report
  std::uint64_t batches_lost = 0;
};

struct WorkerReport {
  ParamDelta delta;
  Matrix posterior;  // xi from the primitive, for the current-snapshot fast path
  std::int64_t batch_index = 0;
  std::uint64_t snapshot_version = 0;
  std::int64_t token_count = 0;
};

enum class AsyncMode {
  snapshot_prior,  // workers use the latest master posterior as their prior
  fixed_prior      // every worker uses the original prior xi_0
};

/// One streaming step: the previous approximation becomes the prior.
template <ApproxPrimitive P>
Matrix streaming_update(const Matrix& q_prev, const Minibatch& batch, P&& prim) {
  return prim(batch, q_prev);
}

namespace detail {

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void apply_report(MasterState& state, WorkerReport&& report, const WallClock& clock,
                         const ProgressHook& hook) {
  const std::uint64_t lag = state.version - report.snapshot_version;
  if (lag == 0) {
    state.xi_post = std::move(report.posterior);
  } else {
    state.xi_post = apply_delta(state.xi_post, report.delta);
  }
  ++state.version;
  ++state.batches_applied;
  state.tokens_applied += static_cast<std::uint64_t>(report.token_count);
  if (hook)
    hook(ProgressEvent{clock.seconds(), state.batches_applied, state.tokens_applied, lag}, state.xi_post);
}

}  // namespace detail

template <BatchSource S, ApproxPrimitive P>
MasterState run_sequential(S& stream, P&& prim, Matrix prior, const ProgressHook& hook = {}) {
  detail::WallClock clock;
  MasterState state;
  state.xi_post = std::move(prior);
  while (auto batch = stream.next()) {
    const std::int64_t tokens = batch->token_count();
    state.xi_post = prim(*batch, state.xi_post);
    ++state.version;
    ++state.batches_applied;
    state.tokens_applied += static_cast<std::uint64_t>(tokens);
    if (hook) hook(ProgressEvent{clock.seconds(), state.batches_applied, state.tokens_applied, 0}, state.xi_post);
  }
  return state;
}

/// Rounds of up to `workers` consecutive minibatches, each computing its
/// delta against the round-start snapshot; deltas fold in ascending batch
/// index, so a fixed stream and worker count reproduce bit-identically.
template <BatchSource S, ApproxPrimitive P>
MasterState run_parallel_sync(S& stream, P&& prim, int workers, Matrix prior, const ProgressHook& hook = {}) {
  if (workers < 1) throw std::invalid_argument("run_parallel_sync: workers must be >= 1");
  detail::WallClock clock;
  MasterState state;
  state.xi_post = std::move(prior);

  while (true) {
    std::vector<Minibatch> round;
    round.reserve(static_cast<std::size_t>(workers));
    while (static_cast<int>(round.size()) < workers) {
      auto batch = stream.next();
      if (!batch) break;
      round.push_back(std::move(*batch));
    }
    if (round.empty()) break;

    const Matrix snapshot = state.xi_post;
    const std::uint64_t snapshot_version = state.version;
    std::vector<std::optional<WorkerReport>> reports(round.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;

    std::vector<std::thread> threads;
    threads.reserve(round.size());
    for (std::size_t i = 0; i < round.size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          Matrix post = prim(round[i], snapshot);
          WorkerReport report;
          report.delta = ParamDelta{post - snapshot, round[i].batch_index};
          report.posterior = std::move(post);
          report.batch_index = round[i].batch_index;
          report.snapshot_version = snapshot_version;
          report.token_count = round[i].token_count();
          reports[i] = std::move(report);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (std::thread& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<WorkerReport> ready;
    ready.reserve(reports.size());
    for (auto& r : reports) ready.push_back(std::move(*r));
    std::sort(ready.begin(), ready.end(),
              [](const WorkerReport& a, const WorkerReport& b) { return a.batch_index < b.batch_index; });
    if (ready.size() == 1) {
      detail::apply_report(state, std::move(ready.front()), clock, hook);
    } else {
      std::vector<ParamDelta> deltas;
      deltas.reserve(ready.size());
      for (const WorkerReport& r : ready) deltas.push_back(r.delta);
      state.xi_post = combine_parallel(state.xi_post, std::move(deltas));
      for (const WorkerReport& r : ready) {
        const std::uint64_t lag = state.version - r.snapshot_version;
        ++state.version;
        ++state.batches_applied;
        state.tokens_applied += static_cast<std::uint64_t>(r.token_count);
        if (hook)
          hook(ProgressEvent{clock.seconds(), state.batches_applied, state.tokens_applied, lag},
               state.xi_post);
      }
    }
  }
  return state;
}

/// Hogwild-style scheme: workers pull from the shared cursor, snapshot the
/// master posterior (or keep the original prior in fixed_prior mode),
/// compute, and submit; the master applies each delta atomically in arrival
/// order. A failing minibatch is re-queued once, then counted lost.
template <BatchSource S, ApproxPrimitive P>
MasterState run_async(S& stream, P&& prim, int workers, Matrix prior,
                      AsyncMode mode = AsyncMode::snapshot_prior, const ProgressHook& hook = {}) {
  if (workers < 1) throw std::invalid_argument("run_async: workers must be >= 1");
  detail::WallClock clock;
  MasterState state;
  state.xi_post = prior;

  std::mutex state_mutex;   // guards state
  std::mutex source_mutex;  // guards stream + retry queue
  std::deque<Minibatch> retry_queue;
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker_loop = [&] {
    while (!abort.load(std::memory_order_relaxed)) {
      std::optional<Minibatch> batch;
      bool is_retry = false;
      {
        std::lock_guard<std::mutex> lock(source_mutex);
        if (!retry_queue.empty()) {
          batch = std::move(retry_queue.front());
          retry_queue.pop_front();
          is_retry = true;
        } else {
          batch = stream.next();
        }
      }
      if (!batch) return;

      Matrix snapshot;
      std::uint64_t snapshot_version = 0;
      if (mode == AsyncMode::fixed_prior) {
        snapshot = prior;
      } else {
        std::lock_guard<std::mutex> lock(state_mutex);
        snapshot = state.xi_post;
        snapshot_version = state.version;
      }

      Matrix post;
      try {
        post = prim(*batch, snapshot);
      } catch (...) {
        if (!is_retry) {
          std::lock_guard<std::mutex> lock(source_mutex);
          retry_queue.push_back(std::move(*batch));
        } else {
          std::lock_guard<std::mutex> lock(state_mutex);
          ++state.batches_lost;
        }
        continue;
      }

      WorkerReport report;
      report.delta = ParamDelta{post - snapshot, batch->batch_index};
      report.posterior = std::move(post);
      report.batch_index = batch->batch_index;
      report.snapshot_version = snapshot_version;
      report.token_count = batch->token_count();
      try {
        std::lock_guard<std::mutex> lock(state_mutex);
        detail::apply_report(state, std::move(report), clock, hook);
      } catch (...) {
        {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
        abort.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i) threads.emplace_back(worker_loop);
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return state;
}

}  // namespace ldastream
