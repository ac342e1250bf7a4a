#include "adelta/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <tuple>

#include "adelta/kernels.hpp"

namespace adelta {

nlohmann::json DeltaApplication::to_json() const {
  nlohmann::json j{{"subject", subject_word}, {"scale", scale}, {"delay", delay_steps}};
  if (occurrence.all)
    j["occurrence"] = "all";
  else
    j["occurrence"] = occurrence.index;
  if (delta) {
    j["delta"] = delta->attribute_name;
    j["encoder_id"] = delta->encoder_id;
    j["method"] = std::string(to_string(delta->method));
    j["config_digest"] = delta->config_digest;
  }
  return j;
}

void GenerationConfig::validate(const TextEncoder& encoder) const {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (!std::isfinite(guidance_weight)) throw Error(ErrorCode::InvalidArgument, "guidance must be finite");
  for (const auto& app : applications) {
    if (!app.delta) throw Error(ErrorCode::InvalidArgument, "application without a delta");
    if (!std::isfinite(app.scale)) throw Error(ErrorCode::InvalidArgument, "scale must be finite");
    if (app.delay_steps < 0) throw Error(ErrorCode::InvalidArgument, "delay must be >= 0");
    if (app.delay_steps > steps)
      throw Error(ErrorCode::DelayExceedsSteps, "delay " + std::to_string(app.delay_steps) +
                                                    " exceeds " + std::to_string(steps) + " steps");
    if (app.delta->encoder_id != encoder.id())
      throw Error(ErrorCode::EncoderMismatch, "delta '" + app.delta->attribute_name +
                                                  "' targets encoder " + app.delta->encoder_id +
                                                  ", generation uses " + encoder.id());
    if (app.delta->dim() != encoder.embedding_dim())
      throw Error(ErrorCode::DimensionMismatch, "delta width does not match the encoder");
  }
}

nlohmann::json GenerationConfig::to_json() const {
  nlohmann::json apps = nlohmann::json::array();
  for (const auto& a : applications) apps.push_back(a.to_json());
  return {{"prompt", prompt},
          {"seed", seed},
          {"steps", steps},
          {"guidance_weight", guidance_weight},
          {"applications", apps}};
}

namespace {

struct ResolvedEdit {
  std::size_t start;
  std::size_t end;
  const AttributeDelta* delta;
  double scale;
};

std::vector<std::uint32_t> bit_pattern(const std::vector<float>& v) {
  std::vector<std::uint32_t> bits(v.size());
  if (!v.empty()) std::memcpy(bits.data(), v.data(), v.size() * sizeof(float));
  return bits;
}

// Total order on delta content, independent of object identity.
int compare_delta(const AttributeDelta& a, const AttributeDelta& b) {
  if (&a == &b) return 0;
  auto ka = std::tie(a.attribute_name, a.encoder_id, a.method, a.config_digest);
  auto kb = std::tie(b.attribute_name, b.encoder_id, b.method, b.config_digest);
  if (ka < kb) return -1;
  if (kb < ka) return 1;
  const auto ba = bit_pattern(a.vector);
  const auto bb = bit_pattern(b.vector);
  if (ba < bb) return -1;
  if (bb < ba) return 1;
  return 0;
}

int compare_key(const ResolvedEdit& a, const ResolvedEdit& b) {
  if (a.start != b.start) return a.start < b.start ? -1 : 1;
  if (a.end != b.end) return a.end < b.end ? -1 : 1;
  return compare_delta(*a.delta, *b.delta);
}

}  // namespace

Matrix apply_deltas(const TokenizedPrompt& tp, const std::vector<DeltaApplication>& applications) {
  std::vector<ResolvedEdit> edits;
  for (const auto& app : applications) {
    if (!app.delta) throw Error(ErrorCode::InvalidArgument, "application without a delta");
    if (app.delta->dim() != tp.embeddings.cols())
      throw Error(ErrorCode::DimensionMismatch,
                  "delta '" + app.delta->attribute_name + "' has width " +
                      std::to_string(app.delta->dim()) + ", embedding has " +
                      std::to_string(tp.embeddings.cols()));
    for (const auto& span : resolve_spans(tp, app.subject_word, app.occurrence))
      edits.push_back({span.start, span.end, app.delta.get(), app.scale});
  }

  std::sort(edits.begin(), edits.end(), [](const ResolvedEdit& a, const ResolvedEdit& b) {
    const int c = compare_key(a, b);
    return c != 0 ? c < 0 : a.scale < b.scale;
  });

  // Merge identical (delta, span) pairs; scales are summed in sorted order.
  std::vector<ResolvedEdit> merged;
  for (const auto& e : edits) {
    if (!merged.empty() && compare_key(merged.back(), e) == 0)
      merged.back().scale += e.scale;
    else
      merged.push_back(e);
  }

  Matrix out = tp.embeddings;
  std::vector<double> vec;
  for (const auto& e : merged) {
    if (e.scale == 0.0) continue;
    vec.assign(e.delta->vector.begin(), e.delta->vector.end());
    for (std::size_t r = e.start; r < e.end; ++r) kernels::axpy(e.scale, vec, out.row(r));
  }
  return out;
}

GenerationResult generate_with_deltas(const Backbone& backbone, const TextEncoder& encoder,
                                      const GenerationConfig& cfg, const StepEmbeddingHook& hook) {
  cfg.validate(encoder);
  const TokenizedPrompt tp = encoder.encode(cfg.prompt);
  const Conditioning baseline = Conditioning::from(tp);
  const Conditioning uncond = Conditioning::from(encoder.encode_unconditional());

  GenerationResult result;

  // One conditioning per distinct delay that takes effect within the run.
  std::vector<int> delays;
  for (const auto& a : cfg.applications) {
    if (a.delay_steps < cfg.steps)
      delays.push_back(a.delay_steps);
    else
      result.warnings.push_back("DelayExceedsSteps: delta '" + a.delta->attribute_name +
                                "' on '" + a.subject_word + "' is never applied");
  }
  std::sort(delays.begin(), delays.end());
  delays.erase(std::unique(delays.begin(), delays.end()), delays.end());

  std::vector<Conditioning> staged;
  staged.reserve(delays.size());
  for (int d : delays) {
    std::vector<DeltaApplication> active;
    for (const auto& a : cfg.applications)
      if (a.delay_steps <= d) active.push_back(a);
    staged.push_back({apply_deltas(tp, active), baseline.special});
  }

  auto provider = [&](int step) -> const Conditioning& {
    const Conditioning* cond = &baseline;
    for (std::size_t i = 0; i < delays.size() && delays[i] <= step; ++i) cond = &staged[i];
    if (hook) hook(step, baseline, *cond);
    return *cond;
  };

  SamplerSettings settings{cfg.seed, cfg.steps, cfg.guidance_weight, false};
  result.image = sample(backbone, provider, uncond, settings).x0;
  result.provenance = cfg.to_json();
  result.provenance["backbone_id"] = backbone.id();
  result.provenance["encoder_id"] = encoder.id();
  return result;
}

std::vector<double> linear_scales(double lo, double hi, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "a scale axis needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return out;
}

SweepGrid sweep_grid(const Backbone& backbone, const TextEncoder& encoder, const GenerationConfig& base,
                     const SweepAxis& axis1, const std::optional<SweepAxis>& axis2) {
  if (axis1.scales.empty() || (axis2 && axis2->scales.empty()))
    throw Error(ErrorCode::InvalidArgument, "sweep axes must have at least one scale");
  SweepGrid grid;
  grid.rows = axis1.scales.size();
  grid.cols = axis2 ? axis2->scales.size() : 1;
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      GenerationConfig cfg = base;
      GridCell cell;
      cell.row = i;
      cell.col = j;
      DeltaApplication a1 = axis1.application;
      a1.scale = axis1.scales[i];
      cfg.applications.push_back(a1);
      cell.scales.push_back(a1.scale);
      if (axis2) {
        DeltaApplication a2 = axis2->application;
        a2.scale = axis2->scales[j];
        cfg.applications.push_back(a2);
        cell.scales.push_back(a2.scale);
      }
      cell.unmodified = std::all_of(cell.scales.begin(), cell.scales.end(),
                                    [](double s) { return s == 0.0; });
      cell.result = generate_with_deltas(backbone, encoder, cfg);
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

}  // namespace adelta
