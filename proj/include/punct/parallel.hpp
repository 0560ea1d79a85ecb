#ifndef PUNCT_PARALLEL_HPP
#define PUNCT_PARALLEL_HPP

#include <atomic>
#include <thread>
#include <vector>

namespace punct {

// Runs fn(i) for i in [0, n). Each index writes its own output slot, so
// results are independent of the thread count.
template <class F>
void parallel_for(int n, int threads, F&& fn) {
  if (threads <= 0) threads = int(std::thread::hardware_concurrency());
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace punct

#endif
