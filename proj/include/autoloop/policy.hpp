#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autoloop/geometry.hpp"
#include "autoloop/library.hpp"
#include "autoloop/rng.hpp"

namespace autoloop {

inline constexpr int kDefaultHorizon = 8;
inline constexpr double kGripperLogit = 1.0;

struct ActionStep {
  Pose ee_pose;
  double gripper_logit = -kGripperLogit;
  int gripper() const { return gripper_logit > 0.0 ? 1 : 0; }
  bool operator==(const ActionStep&) const = default;
};

// Per step: translation (3), rotation vector (3), gripper logit (1).
struct ActionSequence {
  std::vector<ActionStep> steps;

  std::size_t horizon() const { return steps.size(); }
  Eigen::VectorXd vectorize() const;
  static ActionSequence devectorize(const Eigen::VectorXd& v);
  bool operator==(const ActionSequence&) const = default;
};

// Wraps every rotation-vector block of a 7H vector into the ball of radius pi.
void canonicalize_actions(Eigen::VectorXd& v);

// What the policy sees of the current world.
struct Observation {
  PointCloud cloud;
  Pose ee_pose;
  int gripper = 0;
  int subject = -1;                   // label that must be present in the cloud
  std::optional<int> dest_label;      // destination object, if any
  std::optional<Vec3> dest_point;     // destination region center (xy used)
};

// --- graph -----------------------------------------------------------------

struct ContextNode {
  Vec3 centroid = Vec3::Zero();
  Pose ee_pose;
  int gripper = 0;
  bool operator==(const ContextNode&) const = default;
};

struct ObservationNode {
  Vec3 centroid = Vec3::Zero();
  std::size_t point_count = 0;
  Pose ee_pose;
  int gripper = 0;
  bool operator==(const ObservationNode&) const = default;
};

enum class EdgeKind { kTemporal, kCross, kActionConditioning };

struct Edge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::kTemporal;
  bool operator==(const Edge&) const = default;
};

// Node order: context 0..T-1, observation T, actions T+1..T+H.
struct PolicyGraph {
  std::vector<ContextNode> context;
  ObservationNode observation;
  Eigen::VectorXd actions;
  std::vector<Edge> edges;

  int horizon() const { return static_cast<int>(actions.size() / 7); }
  std::size_t node_count() const { return context.size() + 1 + horizon(); }
  bool operator==(const PolicyGraph& o) const;
};

PolicyGraph build_graph(const Demonstration& demo, const Observation& obs,
                        const ActionSequence& actions);

// --- reference trajectory ---------------------------------------------------

// Keyframe-preserving resampling of a demonstration to `horizon` steps.
// Endpoints, both sides of every gripper change and sharp corners are kept;
// remaining samples are spread by arc length.
std::vector<DemonstrationStep> resample(const std::vector<DemonstrationStep>& steps, int horizon);

// Left-composes `t_rel` with every ee pose of the resampled demo.
ActionSequence warp_trajectory(const std::vector<DemonstrationStep>& resampled, const Pose& t_rel);

// Top-center (xy centroid, max z) of the points carrying `label`; all
// non-table points when label < 0.
std::optional<Vec3> top_center(const PointCloud& cloud, int label,
                               std::optional<int> exclude = std::nullopt);

// Demonstration trajectory aligned to the current object placement.
ActionSequence warp_reference(const Demonstration& demo, const Observation& obs,
                              int horizon = kDefaultHorizon);

// --- denoising ---------------------------------------------------------------

struct DiffusionSchedule {
  // Index k-1 holds the coefficient of step k.
  std::vector<double> alpha, gamma, sigma;

  int K() const { return static_cast<int>(alpha.size()); }
  void validate() const;  // InvariantError
  static DiffusionSchedule make(int K = 16, double alpha = 1.0, double gamma = 0.5,
                                double sigma0 = 0.01);
};

class GradientPredictor {
 public:
  virtual ~GradientPredictor() = default;
  virtual Eigen::VectorXd predict(const PolicyGraph& graph, int k) const = 0;
};

class ReferencePredictor : public GradientPredictor {
 public:
  explicit ReferencePredictor(ActionSequence a_star);
  Eigen::VectorXd predict(const PolicyGraph& graph, int k) const override;
  const ActionSequence& reference() const { return a_star_; }

 private:
  ActionSequence a_star_;
  Eigen::VectorXd target_;
};

std::unique_ptr<GradientPredictor> reference_predictor(ActionSequence a_star);

using PredictorFactory = std::function<std::unique_ptr<GradientPredictor>(
    const Demonstration&, const Observation&, int horizon)>;

PredictorFactory reference_predictor_factory();

PolicyGraph denoise_step(const PolicyGraph& graph, int k, const DiffusionSchedule& schedule,
                         const GradientPredictor& predictor, Rng& rng);

struct GenerationTrace {
  std::vector<int> k;
  std::vector<double> residual;  // |eps| at each step
  std::string to_tsv() const;
};

ActionSequence generate_actions(const Demonstration& demo, const Observation& obs,
                                const DiffusionSchedule& schedule,
                                const PredictorFactory& factory, Rng& rng,
                                int horizon = kDefaultHorizon,
                                GenerationTrace* trace = nullptr);

}  // namespace autoloop
