#include "autoloop/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "autoloop/error.hpp"

namespace autoloop {

// ---------------------------------------------------------------------------
// Action vectors

Eigen::VectorXd ActionSequence::vectorize() const {
  Eigen::VectorXd v(7 * steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    v.segment<3>(7 * i) = steps[i].ee_pose.translation();
    v.segment<3>(7 * i + 3) = steps[i].ee_pose.rotation_vector();
    v[7 * i + 6] = steps[i].gripper_logit;
  }
  return v;
}

ActionSequence ActionSequence::devectorize(const Eigen::VectorXd& v) {
  if (v.size() % 7 != 0) throw PolicyError("action vector length is not a multiple of 7");
  ActionSequence a;
  for (Eigen::Index i = 0; i < v.size() / 7; ++i) {
    const Vec3 t = v.segment<3>(7 * i);
    const Vec3 r = v.segment<3>(7 * i + 3);
    a.steps.push_back({Pose::from_rotation_vector(t, r), v[7 * i + 6]});
  }
  return a;
}

void canonicalize_actions(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i + 7 <= v.size(); i += 7) {
    const Vec3 r = v.segment<3>(i + 3);
    v.segment<3>(i + 3) = canonical_rotation_vector(r);
  }
}

// ---------------------------------------------------------------------------
// Graph

bool PolicyGraph::operator==(const PolicyGraph& o) const {
  return context == o.context && observation == o.observation &&
         actions.size() == o.actions.size() && actions == o.actions && edges == o.edges;
}

namespace {

Vec3 object_centroid(const PointCloud& cloud) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& p : cloud.points) {
    if (p.object_id == 0) continue;
    sum += p.position;
    ++n;
  }
  return n ? Vec3(sum / static_cast<double>(n)) : Vec3::Zero();
}

}  // namespace

PolicyGraph build_graph(const Demonstration& demo, const Observation& obs,
                        const ActionSequence& actions) {
  if (demo.steps.empty()) throw PolicyError("demonstration has no steps");
  if (obs.cloud.empty()) throw PolicyError("observation cloud is empty");
  PolicyGraph g;
  for (const auto& s : demo.steps) g.context.push_back({object_centroid(s.cloud), s.ee_pose, s.gripper});
  std::size_t n = 0;
  for (const auto& p : obs.cloud.points) n += p.object_id != 0;
  g.observation = {object_centroid(obs.cloud), n, obs.ee_pose, obs.gripper};
  g.actions = actions.vectorize();

  const int t = static_cast<int>(g.context.size());
  const int h = static_cast<int>(actions.horizon());
  for (int i = 0; i + 1 < t; ++i) g.edges.push_back({i, i + 1, EdgeKind::kTemporal});
  for (int i = 0; i < t; ++i) {
    g.edges.push_back({i, t, EdgeKind::kCross});
    g.edges.push_back({t, i, EdgeKind::kCross});
  }
  for (int j = 0; j < h; ++j) g.edges.push_back({t, t + 1 + j, EdgeKind::kActionConditioning});
  return g;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

constexpr double kCornerAngle = std::numbers::pi / 4.0;

struct Sample {
  double s;       // arc length
  double order;   // tie-break inside equal arc length
  DemonstrationStep step;
};

}  // namespace

std::vector<DemonstrationStep> resample(const std::vector<DemonstrationStep>& steps, int horizon) {
  if (steps.empty()) throw PolicyError("cannot resample an empty trajectory");
  if (horizon < 2) throw PolicyError("horizon must be at least 2");
  const int n = static_cast<int>(steps.size());
  std::vector<double> arc(n, 0.0);
  for (int i = 1; i < n; ++i)
    arc[i] = arc[i - 1] + (steps[i].ee_pose.translation() - steps[i - 1].ee_pose.translation()).norm();

  // Keyframes: index -> priority (corners carry their turn angle, others +inf).
  std::vector<std::pair<int, double>> keys;
  const double must = std::numeric_limits<double>::infinity();
  const auto add = [&](int i, double pri) {
    for (auto& k : keys)
      if (k.first == i) {
        k.second = std::max(k.second, pri);
        return;
      }
    keys.emplace_back(i, pri);
  };
  add(0, must);
  add(n - 1, must);
  for (int i = 1; i < n; ++i)
    if (steps[i].gripper != steps[i - 1].gripper) {
      add(i - 1, must);
      add(i, must);
    }
  for (int i = 1; i + 1 < n; ++i) {
    const Vec3 a = steps[i].ee_pose.translation() - steps[i - 1].ee_pose.translation();
    const Vec3 b = steps[i + 1].ee_pose.translation() - steps[i].ee_pose.translation();
    if (a.norm() < 1e-9 || b.norm() < 1e-9) continue;
    const double angle = std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
    if (angle > kCornerAngle) add(i, angle);
  }
  while (static_cast<int>(keys.size()) > horizon) {
    auto weakest = std::min_element(keys.begin(), keys.end(),
                                    [](const auto& x, const auto& y) { return x.second < y.second; });
    if (weakest->second == must)
      throw PolicyError("trajectory has more gripper events than the action horizon");
    keys.erase(weakest);
  }
  std::sort(keys.begin(), keys.end());

  std::vector<Sample> out;
  for (const auto& [i, _] : keys) out.push_back({arc[i], static_cast<double>(i), steps[i]});

  const int extra = horizon - static_cast<int>(keys.size());
  const double total = arc.back();
  if (extra > 0) {
    // Largest-remainder allocation of the free samples over key intervals.
    const std::size_t m = keys.size() - 1;
    std::vector<int> count(m, 0);
    std::vector<std::pair<double, std::size_t>> rem;
    int used = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double len = arc[keys[j + 1].first] - arc[keys[j].first];
      const double share = total > 0 ? extra * len / total : 0.0;
      count[j] = static_cast<int>(std::floor(share));
      used += count[j];
      rem.emplace_back(share - count[j], j);
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t r = 0; used < extra && r < rem.size(); ++r, ++used) ++count[rem[r].second];
    for (std::size_t j = 0; j < m; ++j) {
      const int i0 = keys[j].first, i1 = keys[j + 1].first;
      const double s0 = arc[i0], s1 = arc[i1];
      for (int c = 1; c <= count[j]; ++c) {
        const double s = s0 + (s1 - s0) * c / (count[j] + 1);
        int seg = i0;
        while (seg + 1 < i1 && arc[seg + 1] < s) ++seg;
        const double len = arc[seg + 1] - arc[seg];
        const double u = len > 0 ? (s - arc[seg]) / len : 0.0;
        DemonstrationStep st;
        st.ee_pose = interpolate(steps[seg].ee_pose, steps[seg + 1].ee_pose, u);
        st.gripper = steps[seg].gripper;
        out.push_back({s, seg + 0.5, std::move(st)});
      }
    }
    // Degenerate (motionless) demos: pad with the final step.
    while (static_cast<int>(out.size()) < horizon)
      out.push_back({total, static_cast<double>(n), steps.back()});
  }
  std::stable_sort(out.begin(), out.end(), [](const Sample& x, const Sample& y) {
    return x.s < y.s || (x.s == y.s && x.order < y.order);
  });
  std::vector<DemonstrationStep> result;
  for (auto& s : out) {
    s.step.cloud = {};
    result.push_back(std::move(s.step));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Warping

ActionSequence warp_trajectory(const std::vector<DemonstrationStep>& resampled, const Pose& t_rel) {
  ActionSequence a;
  for (const auto& s : resampled)
    a.steps.push_back({compose(t_rel, s.ee_pose), s.gripper ? kGripperLogit : -kGripperLogit});
  return a;
}

std::optional<Vec3> top_center(const PointCloud& cloud, int label, std::optional<int> exclude) {
  double sx = 0, sy = 0, zmax = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (const auto& p : cloud.points) {
    if (label >= 0 ? p.object_id != label : p.object_id == 0) continue;
    if (exclude && p.object_id == *exclude) continue;
    sx += p.position.x();
    sy += p.position.y();
    zmax = std::max(zmax, p.position.z());
    ++n;
  }
  if (n == 0) return std::nullopt;
  return Vec3(sx / n, sy / n, zmax);
}

namespace {

enum class AnchorMode { kStart, kEnd, kBoth };

AnchorMode anchor_mode(Verb v) {
  switch (v) {
    case Verb::kPlace: return AnchorMode::kEnd;
    case Verb::kStack:
    case Verb::kUnstack: return AnchorMode::kBoth;
    default: return AnchorMode::kStart;
  }
}

double label_height(const PointCloud& cloud, int label) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : cloud.points) {
    if (label >= 0 ? p.object_id != label : p.object_id == 0) continue;
    lo = std::min(lo, p.position.z());
    hi = std::max(hi, p.position.z());
  }
  return hi >= lo ? hi - lo : 0.0;
}

double xy_distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x() - b.x(), a.y() - b.y()); }

}  // namespace

ActionSequence warp_reference(const Demonstration& demo, const Observation& obs, int horizon) {
  if (demo.steps.empty()) throw PolicyError("demonstration '" + demo.id + "' has no steps");
  if (obs.subject >= 0 && !obs.cloud.has_label(obs.subject))
    throw PolicyError("target label " + std::to_string(obs.subject) + " absent from the cloud");
  if (obs.dest_label && !obs.cloud.has_label(*obs.dest_label))
    throw PolicyError("destination label " + std::to_string(*obs.dest_label) +
                      " absent from the cloud");

  const int demo_label = demo.object_ids.empty() ? -1 : demo.object_ids.front();
  const auto demo_start = top_center(demo.steps.front().cloud, demo_label);
  const auto demo_end = top_center(demo.steps.back().cloud, demo_label);
  if (!demo_start || !demo_end)
    throw PolicyError("demonstration '" + demo.id + "' carries no subject points");

  const auto cur_start = top_center(obs.cloud, -1, obs.dest_label);
  if (!cur_start) throw PolicyError("observation has no object points");
  const double height = label_height(obs.cloud, obs.subject);
  Vec3 cur_end;
  if (obs.dest_label) {
    const auto d = top_center(obs.cloud, *obs.dest_label);
    cur_end = Vec3(d->x(), d->y(), d->z() + height);
  } else if (obs.dest_point) {
    cur_end = Vec3(obs.dest_point->x(), obs.dest_point->y(), height);
  } else {
    cur_end = Vec3(cur_start->x(), cur_start->y(), height);
  }

  const auto samples = resample(demo.steps, horizon);
  const Pose start_shift = Pose::from_translation(*cur_start - *demo_start);
  const Pose end_shift = Pose::from_translation(cur_end - *demo_end);
  switch (anchor_mode(demo.skill_verb)) {
    case AnchorMode::kStart: return warp_trajectory(samples, start_shift);
    case AnchorMode::kEnd: return warp_trajectory(samples, end_shift);
    case AnchorMode::kBoth: break;
  }
  ActionSequence a;
  for (const auto& s : samples) {
    const Vec3& p = s.ee_pose.translation();
    const bool near_start = xy_distance(p, *demo_start) <= xy_distance(p, *demo_end);
    a.steps.push_back({compose(near_start ? start_shift : end_shift, s.ee_pose),
                       s.gripper ? kGripperLogit : -kGripperLogit});
  }
  return a;
}

// ---------------------------------------------------------------------------
// Denoising

void DiffusionSchedule::validate() const {
  if (alpha.empty()) throw InvariantError("diffusion schedule needs K >= 1");
  if (gamma.size() != alpha.size() || sigma.size() != alpha.size())
    throw InvariantError("diffusion schedule coefficient lengths differ");
  for (int k = 1; k <= K(); ++k) {
    const double a = alpha[k - 1], g = gamma[k - 1], s = sigma[k - 1];
    if (!std::isfinite(a) || !std::isfinite(g) || !std::isfinite(s))
      throw InvariantError("diffusion schedule has a non-finite coefficient at k=" + std::to_string(k));
    if (!(g > 0.0 && g <= 1.0))
      throw InvariantError("gamma_k must lie in (0, 1] (k=" + std::to_string(k) + ")");
    if (s < 0.0) throw InvariantError("sigma_k must be non-negative");
  }
  if (sigma[0] != 0.0) throw InvariantError("sigma_1 must be 0");
}

DiffusionSchedule DiffusionSchedule::make(int K, double alpha, double gamma, double sigma0) {
  if (K < 1) throw InvariantError("diffusion schedule needs K >= 1");
  DiffusionSchedule s;
  for (int k = 1; k <= K; ++k) {
    s.alpha.push_back(alpha);
    s.gamma.push_back(gamma);
    s.sigma.push_back(sigma0 * (k - 1) / K);
  }
  s.validate();
  return s;
}

ReferencePredictor::ReferencePredictor(ActionSequence a_star)
    : a_star_(std::move(a_star)), target_(a_star_.vectorize()) {}

Eigen::VectorXd ReferencePredictor::predict(const PolicyGraph& graph, int) const {
  if (graph.actions.size() != target_.size())
    throw PolicyError("action horizon differs from the reference");
  return graph.actions - target_;
}

std::unique_ptr<GradientPredictor> reference_predictor(ActionSequence a_star) {
  return std::make_unique<ReferencePredictor>(std::move(a_star));
}

PredictorFactory reference_predictor_factory() {
  return [](const Demonstration& d, const Observation& o, int horizon) {
    return reference_predictor(warp_reference(d, o, horizon));
  };
}

PolicyGraph denoise_step(const PolicyGraph& graph, int k, const DiffusionSchedule& schedule,
                         const GradientPredictor& predictor, Rng& rng) {
  if (k < 1 || k > schedule.K())
    throw PolicyError("denoising step " + std::to_string(k) + " outside 1.." +
                      std::to_string(schedule.K()));
  const Eigen::VectorXd eps = predictor.predict(graph, k);
  if (eps.size() != graph.actions.size()) throw PolicyError("prediction has the wrong length");
  if (!eps.allFinite()) throw PolicyError("non-finite prediction at k=" + std::to_string(k));
  PolicyGraph out = graph;
  const double alpha = schedule.alpha[k - 1];
  const double gamma = schedule.gamma[k - 1];
  const double sigma = schedule.sigma[k - 1];
  out.actions = alpha * (graph.actions - gamma * eps);
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index i = 0; i < out.actions.size(); ++i) out.actions[i] += normal(rng);
  }
  canonicalize_actions(out.actions);
  return out;
}

std::string GenerationTrace::to_tsv() const {
  std::ostringstream os;
  os << "k\tresidual\n";
  for (std::size_t i = 0; i < k.size(); ++i) os << k[i] << '\t' << residual[i] << '\n';
  return os.str();
}

ActionSequence generate_actions(const Demonstration& demo, const Observation& obs,
                                const DiffusionSchedule& schedule,
                                const PredictorFactory& factory, Rng& rng, int horizon,
                                GenerationTrace* trace) {
  schedule.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd a(7 * horizon);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = normal(rng);
  canonicalize_actions(a);
  PolicyGraph g = build_graph(demo, obs, ActionSequence::devectorize(a));
  g.actions = a;
  const auto predictor = factory(demo, obs, horizon);
  for (int k = schedule.K(); k >= 1; --k) {
    if (trace) {
      trace->k.push_back(k);
      trace->residual.push_back(predictor->predict(g, k).norm());
    }
    g = denoise_step(g, k, schedule, *predictor, rng);
  }
  return ActionSequence::devectorize(g.actions);
}

}  // namespace autoloop
