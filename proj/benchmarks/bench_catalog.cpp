// Microbenchmarks for the hot paths: insert, seal, proof-checked search and
// proof generation, over catalogs of varying size and skip factor.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>
#include <random>

#include "icat/auth_list.hpp"
#include "icat/treap_pad.hpp"

using namespace icat;

namespace {

struct ScratchPad {
  std::filesystem::path dir;
  std::unique_ptr<TreapPad> pad;

  explicit ScratchPad(std::uint32_t skip_no, std::uint32_t page_size = 16384) {
    std::mt19937_64 rng(std::random_device{}());
    dir = std::filesystem::temp_directory_path() / ("icat-bench-" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    pad = TreapPad::create((dir / "p.icat").string(), page_size, skip_no);
  }
  ~ScratchPad() {
    pad.reset();
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }
};

Bytes key_of(std::uint64_t i) { return to_bytes("urn:obj/" + std::to_string(i)); }
Bytes value_of(std::uint64_t i) { return to_bytes("digest-" + std::to_string(i * 2654435761u)); }

void fill(TreapPad& pad, std::uint64_t keys, std::uint64_t epochs) {
  std::uint64_t per_epoch = keys / epochs;
  for (std::uint64_t e = 0; e < epochs; ++e) {
    for (std::uint64_t k = e * per_epoch; k < (e + 1) * per_epoch; ++k)
      pad.insert(key_of(k), value_of(k));
    pad.snapshot();
  }
}

} // namespace

static void BM_Insert(benchmark::State& state) {
  ScratchPad scratch(static_cast<std::uint32_t>(state.range(1)));
  std::uint64_t preload = static_cast<std::uint64_t>(state.range(0));
  fill(*scratch.pad, preload, 1);
  std::uint64_t next = preload;
  for (auto _ : state) {
    scratch.pad->insert(key_of(next), value_of(next));
    ++next;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Insert)->Args({10000, 0})->Args({100000, 0})->Args({100000, 4});

static void BM_Seal(benchmark::State& state) {
  // cost of sealing an epoch of 1000 fresh keys, amortized per element
  ScratchPad scratch(static_cast<std::uint32_t>(state.range(0)));
  fill(*scratch.pad, 50000, 1);
  std::uint64_t next = 50000;
  for (auto _ : state) {
    state.PauseTiming();
    for (int i = 0; i < 1000; ++i, ++next) scratch.pad->insert(key_of(next), value_of(next));
    state.ResumeTiming();
    scratch.pad->snapshot();
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Seal)->Arg(0)->Arg(4);

static void BM_VerifiedSearch(benchmark::State& state) {
  ScratchPad scratch(static_cast<std::uint32_t>(state.range(1)));
  std::uint64_t keys = static_cast<std::uint64_t>(state.range(0));
  fill(*scratch.pad, keys, 10);
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    std::uint64_t s = 1 + rng() % 10;
    auto got = scratch.pad->verified_get(key_of(rng() % keys), s, scratch.pad->view(s).pra);
    benchmark::DoNotOptimize(got);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_VerifiedSearch)->Args({10000, 0})->Args({100000, 0})->Args({100000, 4});

static void BM_Prove(benchmark::State& state) {
  ScratchPad scratch(0);
  std::uint64_t keys = static_cast<std::uint64_t>(state.range(0));
  fill(*scratch.pad, keys, 1);
  std::mt19937_64 rng(2);
  for (auto _ : state) {
    auto proof = scratch.pad->prove(key_of(rng() % keys), 1);
    benchmark::DoNotOptimize(proof);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Prove)->Arg(10000)->Arg(100000);

static void BM_ListAppendProve(benchmark::State& state) {
  ScratchPad scratch(0, 4096);
  AuthList list(*scratch.pad);
  std::uint64_t i = 0;
  for (auto _ : state) {
    ++i;
    SnapshotRecord r{i, RecordId{i, 0}, sha256().hash(to_bytes("pra" + std::to_string(i))),
                     1700000000 + i};
    list.append(r);
    auto proof = list.prove(1 + (i / 2));
    benchmark::DoNotOptimize(proof);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ListAppendProve);

BENCHMARK_MAIN();
