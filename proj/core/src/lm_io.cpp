#include <cmath>

#include "binary_io.hpp"
#include "graphprobe/tinylm.hpp"

namespace graphprobe {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kTraceVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LmCheckpoint& checkpoint) {
  const auto& c = checkpoint.config;
  detail::BinaryWriter w(path);
  w.magic("GPLM");
  w.u32(kCheckpointVersion);
  w.u64(checkpoint.step);
  w.u32(static_cast<std::uint32_t>(c.vocab_size));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.depth));
  w.u32(static_cast<std::uint32_t>(c.heads));
  w.u32(static_cast<std::uint32_t>(c.context));
  w.u64(c.seed);
  w.u64(c.total_steps);
  w.u32(static_cast<std::uint32_t>(c.checkpoint_schedule.size()));
  for (auto s : c.checkpoint_schedule) w.u64(s);
  w.u32(static_cast<std::uint32_t>(c.batch_size));
  w.u32(static_cast<std::uint32_t>(c.window));
  w.f64(c.learning_rate);
  w.u32(static_cast<std::uint32_t>(c.warmup_steps));
  w.f64(c.grad_clip);
  checkpoint.weights.visit([&](const std::string&, const MatF& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(m.data(), static_cast<std::size_t>(m.size()));
  });
  w.finish();
}

LmCheckpoint load_checkpoint(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GPLM");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  LmCheckpoint ckpt;
  ckpt.step = r.u64();
  auto& c = ckpt.config;
  c.vocab_size = r.u32();
  c.width = r.u32();
  c.depth = r.u32();
  c.heads = r.u32();
  c.context = r.u32();
  c.seed = r.u64();
  c.total_steps = r.u64();
  const auto n_sched = r.u32();
  if (n_sched > 64) throw DataError(path.string() + ": implausible checkpoint schedule");
  for (std::uint32_t i = 0; i < n_sched; ++i) c.checkpoint_schedule.push_back(r.u64());
  c.batch_size = r.u32();
  c.window = r.u32();
  c.learning_rate = r.f64();
  c.warmup_steps = r.u32();
  c.grad_clip = r.f64();
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  ckpt.weights = LmWeights<float>::zeros(c);
  ckpt.weights.visit([&](const std::string& name, MatF& m) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows != m.rows() || cols != m.cols()) {
      throw DataError(path.string() + ": shape mismatch for " + name);
    }
    r.floats(m.data(), static_cast<std::size_t>(m.size()));
  });
  r.expect_end();
  return ckpt;
}

void write_trace(const std::filesystem::path& path, const ActivationTrace& trace) {
  detail::BinaryWriter w(path);
  w.magic("GPRB");
  w.u32(kTraceVersion);
  w.u32(static_cast<std::uint32_t>(trace.H.rows()));
  w.u32(static_cast<std::uint32_t>(trace.H.cols()));
  w.floats(trace.H.data(), static_cast<std::size_t>(trace.H.size()));
  w.finish();
}

ActivationTrace read_trace(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GPRB");
  if (const auto v = r.u32(); v != kTraceVersion) {
    throw DataError(path.string() + ": unsupported trace version " + std::to_string(v));
  }
  const auto n = r.u32();
  const auto t = r.u32();
  if (n == 0 || t == 0) throw DataError(path.string() + ": empty trace");
  const auto file_size = std::filesystem::file_size(path);
  if (file_size != 16 + std::uint64_t(n) * t * sizeof(float)) {
    throw DataError(path.string() + ": size does not match header dimensions");
  }
  ActivationTrace trace;
  trace.sample_id = path.stem().string();
  trace.H.resize(n, t);
  r.floats(trace.H.data(), static_cast<std::size_t>(n) * t);
  if (!trace.H.allFinite()) throw DataError(path.string() + ": non-finite activation values");
  return trace;
}

}  // namespace graphprobe
