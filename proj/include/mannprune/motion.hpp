// Frame schema, procedural quadruped gaits, autoregressive datasets, and rollout.
//
// Units are centimetres and cm/frame throughout. The frame vector is laid
// out as
//   root (4) | per joint: position(3) rotation-6D(6) velocity(3) |
//   foot heights (4) | foot horizontal speeds (4) | trajectory control (12)
// with joint positions and velocities expressed in the root's heading frame
// (right, up, forward).
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mannprune/network.hpp"

namespace mannprune {

struct ColumnRange {
  std::string role;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const ColumnRange&) const = default;
};

struct FootColumns {
  std::string joint;
  std::size_t height = 0;
  std::size_t speed = 0;
  bool operator==(const FootColumns&) const = default;
};

/// Joint counts of the procedural skeleton. The defaults give a 33-joint
/// quadruped whose 420-column frame puts the 8-expert, 512-wide network at
/// about 5.55M parameters.
struct SkeletonLayout {
  std::size_t spine = 3;
  std::size_t neck = 2;
  std::size_t tail = 4;
  std::size_t ears = 2;
  std::size_t leg_joints = 5;  // hip ... foot, per leg

  static SkeletonLayout compact() { return {1, 1, 0, 0, 3}; }
  std::size_t joint_count() const { return 1 + spine + neck + 1 + ears + tail + 4 * leg_joints; }
  bool operator==(const SkeletonLayout&) const = default;
};

inline constexpr std::size_t kRootColumns = 4;
inline constexpr std::size_t kJointColumns = 12;
inline constexpr std::size_t kFeet = 4;
inline constexpr std::size_t kTrajectorySamples = 6;
inline constexpr std::size_t kTrajectoryStride = 10;  // frames between control samples
inline constexpr std::size_t kControlColumns = 2 * kTrajectorySamples;
inline constexpr std::array<const char*, kFeet> kLegNames{"LF", "RF", "LH", "RH"};

struct SkeletonSchema {
  SkeletonLayout layout;
  std::vector<std::string> joint_names;
  std::vector<int> parents;
  std::vector<std::string> columns;
  std::vector<ColumnRange> ranges;
  std::vector<FootColumns> feet;
  std::vector<std::size_t> gating_columns;
  std::vector<std::size_t> control_columns;
  double frame_rate = 60.0;
  std::string units = "cm";

  std::size_t dim() const { return columns.size(); }
  std::size_t joint_count() const { return joint_names.size(); }
  std::size_t joint_offset(std::size_t j) const { return kRootColumns + kJointColumns * j; }
  std::size_t position_column(std::size_t j) const { return joint_offset(j); }
  std::size_t rotation_column(std::size_t j) const { return joint_offset(j) + 3; }
  std::size_t velocity_column(std::size_t j) const { return joint_offset(j) + 9; }

  void validate() const {
    if (columns.empty()) throw ConfigError("schema has no columns");
    if (!(frame_rate > 0)) throw ConfigError("schema frame_rate must be > 0");
    std::vector<int> covered(columns.size(), 0);
    for (const auto& r : ranges) {
      if (r.begin > r.end || r.end > columns.size())
        throw ConfigError("schema range '" + r.role + "' out of bounds");
      for (std::size_t c = r.begin; c < r.end; ++c) ++covered[c];
    }
    for (std::size_t c = 0; c < covered.size(); ++c)
      if (covered[c] != 1)
        throw ConfigError("schema column " + std::to_string(c) + " (" + columns[c] + ") covered " +
                          std::to_string(covered[c]) + " times by column ranges");
    if (feet.empty()) throw ConfigError("schema declares no foot joints");
    for (const auto& f : feet)
      if (f.height >= columns.size() || f.speed >= columns.size())
        throw ConfigError("schema foot '" + f.joint + "' has out-of-range columns");
    for (std::size_t c : gating_columns)
      if (c >= columns.size()) throw ConfigError("schema gating column out of range");
    for (std::size_t c : control_columns)
      if (c >= columns.size()) throw ConfigError("schema control column out of range");
  }

  bool operator==(const SkeletonSchema&) const = default;
};

inline SkeletonSchema build_schema(const SkeletonLayout& layout = {}, double frame_rate = 60.0) {
  if (layout.leg_joints < 2) throw ConfigError("skeleton leg_joints must be >= 2");
  SkeletonSchema s;
  s.layout = layout;
  s.frame_rate = frame_rate;
  auto add_joint = [&](std::string name, int parent) {
    s.joint_names.push_back(std::move(name));
    s.parents.push_back(parent);
    return static_cast<int>(s.joint_names.size() - 1);
  };
  const int root = add_joint("root", -1);
  int prev = root;
  for (std::size_t i = 0; i < layout.spine; ++i) prev = add_joint("spine" + std::to_string(i), prev);
  const int shoulders = prev;
  for (std::size_t i = 0; i < layout.neck; ++i) prev = add_joint("neck" + std::to_string(i), prev);
  const int head = add_joint("head", prev);
  for (std::size_t i = 0; i < layout.ears; ++i) add_joint("ear" + std::to_string(i), head);
  prev = root;
  for (std::size_t i = 0; i < layout.tail; ++i) prev = add_joint("tail" + std::to_string(i), prev);
  for (std::size_t leg = 0; leg < kFeet; ++leg) {
    prev = leg < 2 ? shoulders : root;
    for (std::size_t i = 0; i < layout.leg_joints; ++i) {
      const bool foot = i + 1 == layout.leg_joints;
      prev = add_joint(std::string(kLegNames[leg]) + (foot ? "_foot" : "_leg" + std::to_string(i)), prev);
    }
  }

  auto add_range = [&](std::string role, const std::vector<std::string>& names) {
    const std::size_t begin = s.columns.size();
    s.columns.insert(s.columns.end(), names.begin(), names.end());
    s.ranges.push_back({std::move(role), begin, s.columns.size()});
  };
  add_range("root", {"root_vel_right", "root_vel_forward", "root_yaw_rate", "root_height"});
  for (const auto& j : s.joint_names) {
    std::vector<std::string> names;
    for (const char* c : {"px", "py", "pz", "r0", "r1", "r2", "r3", "r4", "r5", "vx", "vy", "vz"})
      names.push_back(j + "_" + c);
    add_range("joint:" + j, names);
  }
  std::vector<std::string> heights, speeds, control;
  for (const char* leg : kLegNames) {
    heights.push_back(std::string(leg) + "_height");
    speeds.push_back(std::string(leg) + "_speed");
  }
  for (std::size_t k = 1; k <= kTrajectorySamples; ++k) {
    control.push_back("traj" + std::to_string(k) + "_right");
    control.push_back("traj" + std::to_string(k) + "_forward");
  }
  const std::size_t height_begin = s.columns.size();
  add_range("foot_heights", heights);
  const std::size_t speed_begin = s.columns.size();
  add_range("foot_speeds", speeds);
  const std::size_t control_begin = s.columns.size();
  add_range("control", control);

  const std::size_t joints = s.joint_names.size();
  for (std::size_t leg = 0; leg < kFeet; ++leg) {
    const std::size_t foot_joint = joints - kFeet * layout.leg_joints + (leg + 1) * layout.leg_joints - 1;
    s.feet.push_back({s.joint_names[foot_joint], height_begin + leg, speed_begin + leg});
    for (std::size_t c = 0; c < 3; ++c) s.gating_columns.push_back(s.velocity_column(foot_joint) + c);
  }
  for (std::size_t c = 0; c < kControlColumns; ++c) s.control_columns.push_back(control_begin + c);
  return s;
}

enum class GaitType { walk, trot, gallop, turn, idle };

inline const char* to_string(GaitType g) {
  switch (g) {
    case GaitType::walk: return "walk";
    case GaitType::trot: return "trot";
    case GaitType::gallop: return "gallop";
    case GaitType::turn: return "turn";
    case GaitType::idle: return "idle";
  }
  return "?";
}

inline GaitType gait_from_string(const std::string& s) {
  for (GaitType g : {GaitType::walk, GaitType::trot, GaitType::gallop, GaitType::turn, GaitType::idle})
    if (s == to_string(g)) return g;
  throw ConfigError("unknown gait type '" + s + "'");
}

/// Leg order everywhere is LF, RF, LH, RH.
struct GaitSpec {
  GaitType type = GaitType::walk;
  std::array<double, kFeet> duty{0.7, 0.7, 0.7, 0.7};
  std::array<double, kFeet> phase{0.25, 0.75, 0.0, 0.5};
  double stride_cm = 50.0;
  double speed_cm_s = 60.0;
  double turn_deg_s = 0.0;
  double swing_height_cm = 10.0;
  double noise = 0.2;
  double duration_s = 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    for (std::size_t l = 0; l < kFeet; ++l) {
      if (!(duty[l] > 0.0 && duty[l] < 1.0)) throw ConfigError("gait duty factors must be in (0, 1)");
      if (!(phase[l] >= 0.0 && phase[l] < 1.0)) throw ConfigError("gait phase offsets must be in [0, 1)");
    }
    if (!(stride_cm > 0)) throw ConfigError("gait stride_cm must be > 0");
    if (!(speed_cm_s >= 0)) throw ConfigError("gait speed_cm_s must be >= 0");
    if (!(swing_height_cm > 0)) throw ConfigError("gait swing_height_cm must be > 0");
    if (!(noise >= 0)) throw ConfigError("gait noise must be >= 0");
    if (!(duration_s >= 0)) throw ConfigError("gait duration_s must be >= 0");
    if (!std::isfinite(turn_deg_s)) throw ConfigError("gait turn_deg_s must be finite");
  }

  static GaitSpec preset(GaitType type, std::uint64_t seed = 0, double duration_s = 2.0) {
    GaitSpec g;
    g.type = type;
    g.seed = seed;
    g.duration_s = duration_s;
    switch (type) {
      case GaitType::walk:
        break;
      case GaitType::trot:
        g.duty = {0.5, 0.5, 0.5, 0.5};
        g.phase = {0.0, 0.5, 0.5, 0.0};
        g.stride_cm = 80.0;
        g.speed_cm_s = 150.0;
        g.swing_height_cm = 12.0;
        break;
      case GaitType::gallop:
        g.duty = {0.35, 0.35, 0.35, 0.35};
        g.phase = {0.0, 0.1, 0.6, 0.5};
        g.stride_cm = 140.0;
        g.speed_cm_s = 400.0;
        g.swing_height_cm = 14.0;
        break;
      case GaitType::turn:
        g.turn_deg_s = 60.0;
        break;
      case GaitType::idle:
        g.duty = {0.9, 0.9, 0.9, 0.9};
        g.phase = {0.0, 0.0, 0.0, 0.0};
        g.speed_cm_s = 0.0;
        break;
    }
    return g;
  }
};

struct MotionClip {
  std::shared_ptr<const SkeletonSchema> schema;
  std::string id;
  std::string label;
  Matrix<float> frames;  // T x d

  std::size_t length() const { return frames.rows; }
};

namespace gait {

struct Vec3 {
  double x = 0, y = 0, z = 0;  // world: x/z horizontal, y up
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline constexpr double kBodyHeight = 45.0;
inline constexpr double kHipForward = 30.0;
inline constexpr double kHipLateral = 10.0;
inline constexpr double kLegLength = 52.0;
inline constexpr double kTurnRadius = 35.0;  // hip radius used for cadence while turning
inline constexpr double kSwingMargin = 0.2;  // fraction of swing at each end with no horizontal motion

struct RootPose {
  double x, z, heading;
  Vec3 forward() const { return {std::cos(heading), 0, std::sin(heading)}; }
  Vec3 right() const { return {-std::sin(heading), 0, std::cos(heading)}; }
  Vec3 ground() const { return {x, 0, z}; }
  /// World point to (right, up, forward) coordinates.
  Vec3 to_local(const Vec3& w) const {
    const Vec3 d = w - ground();
    const Vec3 r = right(), f = forward();
    return {d.x * r.x + d.z * r.z, d.y, d.x * f.x + d.z * f.z};
  }
  Vec3 dir_to_local(const Vec3& d) const {
    const Vec3 r = right(), f = forward();
    return {d.x * r.x + d.z * r.z, d.y, d.x * f.x + d.z * f.z};
  }
  Vec3 to_world(double right_cm, double up_cm, double forward_cm) const {
    return ground() + right() * right_cm + forward() * forward_cm + Vec3{0, up_cm, 0};
  }
};

/// Analytic continuous-time kinematics of one gait.
class Kinematics {
 public:
  explicit Kinematics(const GaitSpec& spec) : spec_(spec) {
    turn_rate_ = spec.turn_deg_s * std::numbers::pi / 180.0;
    const double effective = spec.speed_cm_s + std::abs(turn_rate_) * kTurnRadius * (spec.speed_cm_s > 0 ? 0.0 : 1.0);
    cadence_ = effective / spec.stride_cm;
  }

  double cadence() const { return cadence_; }

  RootPose root(double t) const {
    const double v = spec_.speed_cm_s, w = turn_rate_;
    if (std::abs(w) < 1e-12) return {v * t, 0.0, 0.0};
    return {v / w * std::sin(w * t), v / w * (1.0 - std::cos(w * t)), w * t};
  }

  double bob(double t) const {
    return cadence_ == 0.0 ? 0.0 : 1.5 * std::sin(4.0 * std::numbers::pi * cadence_ * t);
  }

  static Vec3 hip_offset(std::size_t leg) {
    const double fwd = leg < 2 ? kHipForward : -kHipForward;
    const double lat = leg % 2 == 0 ? -kHipLateral : kHipLateral;
    return {lat, 0, fwd};
  }

  Vec3 nominal_foot(std::size_t leg, double t) const {
    const Vec3 h = hip_offset(leg);
    return root(t).to_world(h.x, 0.0, h.z);
  }

  struct FootState {
    Vec3 position;   // world, y = height
    double speed;    // horizontal, cm/s
    bool stance;
  };

  FootState foot(std::size_t leg, double t) const {
    const double duty = spec_.duty[leg], off = spec_.phase[leg];
    if (cadence_ == 0.0) {
      const Vec3 p = nominal_foot(leg, 0.0);
      if (off < duty) return {p, 0.0, true};
      const double u = (off - duty) / (1.0 - duty);
      return {{p.x, spec_.swing_height_cm * (1.0 - std::cos(2.0 * std::numbers::pi * u)) / 2.0, p.z}, 0.0, false};
    }
    const double c = cadence_ * t + off;
    const double k = std::floor(c);
    const double phi = c - k;
    const Vec3 plant = plant_position(leg, k);
    if (phi < duty) return {plant, 0.0, true};
    const Vec3 next = plant_position(leg, k + 1.0);
    const double u = (phi - duty) / (1.0 - duty);
    const double span = 1.0 - 2.0 * kSwingMargin;
    const double up = std::clamp((u - kSwingMargin) / span, 0.0, 1.0);
    const double progress = up - std::sin(2.0 * std::numbers::pi * up) / (2.0 * std::numbers::pi);
    Vec3 pos = plant + (next - plant) * progress;
    pos.y = spec_.swing_height_cm * (1.0 - std::cos(2.0 * std::numbers::pi * u)) / 2.0;
    double speed = 0.0;
    if (u > kSwingMargin && u < 1.0 - kSwingMargin) {
      const Vec3 d = next - plant;
      const double horizontal = std::sqrt(d.x * d.x + d.z * d.z);
      speed = horizontal * (1.0 - std::cos(2.0 * std::numbers::pi * up)) / span * cadence_ / (1.0 - duty);
    }
    return {pos, speed, false};
  }

 private:
  Vec3 plant_position(std::size_t leg, double cycle) const {
    const double mid = (cycle - spec_.phase[leg] + spec_.duty[leg] / 2.0) / cadence_;
    return nominal_foot(leg, mid);
  }

  GaitSpec spec_;
  double turn_rate_ = 0;
  double cadence_ = 0;
};

/// World positions of every joint at time t (noise free).
inline std::vector<Vec3> joint_positions(const Kinematics& kin, const SkeletonSchema& schema, double t) {
  const SkeletonLayout& L = schema.layout;
  const RootPose pose = kin.root(t);
  const double cyc = 2.0 * std::numbers::pi * kin.cadence() * t;
  const double body = kBodyHeight + kin.bob(t);
  std::vector<Vec3> out;
  out.reserve(schema.joint_count());
  out.push_back(pose.to_world(0, body, 0));
  for (std::size_t i = 1; i <= L.spine; ++i)
    out.push_back(pose.to_world(0, body + 1.0 * std::sin(cyc) * i / L.spine, kHipForward * i / L.spine));
  const double neck_base = body;
  for (std::size_t i = 1; i <= L.neck; ++i)
    out.push_back(pose.to_world(0, neck_base + 15.0 * i / L.neck, kHipForward + 10.0 * i / L.neck));
  const double head_y = neck_base + 20.0 + 2.0 * std::sin(cyc);
  out.push_back(pose.to_world(0, head_y, kHipForward + 15.0));
  for (std::size_t i = 0; i < L.ears; ++i)
    out.push_back(pose.to_world(i % 2 == 0 ? -4.0 : 4.0, head_y + 6.0, kHipForward + 14.0));
  for (std::size_t i = 1; i <= L.tail; ++i) {
    const double frac = static_cast<double>(i) / L.tail;
    out.push_back(pose.to_world(3.0 * std::sin(cyc + frac) * frac, body + 2.0 * frac, -kHipForward - 8.0 * i));
  }
  for (std::size_t leg = 0; leg < kFeet; ++leg) {
    const Vec3 h = Kinematics::hip_offset(leg);
    const Vec3 hip = pose.to_world(h.x, body, h.z);
    const Vec3 foot = kin.foot(leg, t).position;
    const Vec3 d = foot - hip;
    const double bend = 0.5 * std::sqrt(std::max(kLegLength * kLegLength - d.norm() * d.norm(), 0.0));
    const Vec3 bend_dir = pose.forward() * (leg < 2 ? -1.0 : 1.0);
    const std::size_t n = L.leg_joints;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(n - 1);
      out.push_back(hip + d * s + bend_dir * (bend * std::sin(std::numbers::pi * s)));
    }
  }
  return out;
}

/// Two columns of the rotation whose z axis follows the bone toward its
/// first child (or away from its parent for leaves).
inline std::array<double, 6> bone_rotation(const std::vector<Vec3>& local, const SkeletonSchema& schema,
                                           std::size_t j, bool leg) {
  Vec3 dir{0, 0, 1};
  bool found = false;
  for (std::size_t c = j + 1; c < schema.joint_count(); ++c)
    if (schema.parents[c] == static_cast<int>(j)) {
      dir = local[c] - local[j];
      found = true;
      break;
    }
  if (!found && schema.parents[j] >= 0) dir = local[j] - local[static_cast<std::size_t>(schema.parents[j])];
  double n = dir.norm();
  Vec3 z = n > 1e-9 ? dir * (1.0 / n) : Vec3{0, 0, 1};
  Vec3 ref = leg ? Vec3{0, 0, 1} : Vec3{0, 1, 0};
  Vec3 x = cross(ref, z);
  if (x.norm() < 1e-6) x = cross(leg ? Vec3{0, 1, 0} : Vec3{0, 0, 1}, z);
  x = x * (1.0 / x.norm());
  const Vec3 y = cross(z, x);
  return {x.x, x.y, x.z, y.x, y.y, y.z};
}

}  // namespace gait

/// Synthesizes one clip. Feet in stance have height 0 and speed 0 exactly;
/// seeded noise touches only non-leg joint positions.
inline MotionClip generate_gait(const GaitSpec& spec, std::shared_ptr<const SkeletonSchema> schema) {
  spec.validate();
  if (!schema) throw ConfigError("generate_gait: null schema");
  using namespace gait;
  const SkeletonSchema& S = *schema;
  const std::size_t frames = static_cast<std::size_t>(std::llround(spec.duration_s * S.frame_rate));
  if (frames < 2) throw ConfigError("generate_gait: duration gives fewer than 2 frames");
  const double dt = 1.0 / S.frame_rate;
  const Kinematics kin(spec);
  Rng noise = Rng::derive(spec.seed, 0x6761697400ULL);
  const std::size_t leg_begin = S.joint_count() - kFeet * S.layout.leg_joints;

  MotionClip clip;
  clip.schema = schema;
  clip.id = std::string(to_string(spec.type)) + "_" + std::to_string(spec.seed);
  clip.label = to_string(spec.type);
  clip.frames = Matrix<float>(frames, S.dim());

  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) * dt;
    const RootPose pose = kin.root(t), prev_pose = kin.root(t - dt);
    const auto world = joint_positions(kin, S, t);
    const auto world_prev = joint_positions(kin, S, t - dt);
    auto row = clip.frames.row(f);

    const Vec3 root_vel = pose.dir_to_local(pose.ground() - prev_pose.ground());
    row[0] = static_cast<float>(root_vel.x);
    row[1] = static_cast<float>(root_vel.z);
    row[2] = static_cast<float>(pose.heading - prev_pose.heading);
    row[3] = static_cast<float>(world[0].y);

    std::vector<Vec3> local(world.size());
    for (std::size_t j = 0; j < world.size(); ++j) local[j] = pose.to_local(world[j]);
    for (std::size_t j = 0; j < world.size(); ++j) {
      const bool leg = j >= leg_begin;
      Vec3 p = local[j];
      if (!leg && spec.noise > 0) p = p + Vec3{noise.normal(), noise.normal(), noise.normal()} * spec.noise;
      const std::size_t c = S.position_column(j);
      row[c] = static_cast<float>(p.x);
      row[c + 1] = static_cast<float>(p.y);
      row[c + 2] = static_cast<float>(p.z);
      const auto rot = bone_rotation(local, S, j, leg);
      for (std::size_t k = 0; k < 6; ++k) row[S.rotation_column(j) + k] = static_cast<float>(rot[k]);
      const Vec3 v = pose.dir_to_local(world[j] - world_prev[j]);
      const std::size_t vc = S.velocity_column(j);
      row[vc] = static_cast<float>(v.x);
      row[vc + 1] = static_cast<float>(v.y);
      row[vc + 2] = static_cast<float>(v.z);
    }
    for (std::size_t leg = 0; leg < kFeet && leg < S.feet.size(); ++leg) {
      const auto fs = kin.foot(leg, t);
      row[S.feet[leg].height] = fs.stance ? 0.0f : static_cast<float>(fs.position.y);
      row[S.feet[leg].speed] = fs.stance ? 0.0f : static_cast<float>(fs.speed * dt);
    }
    for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
      const double tf = t + static_cast<double>((k + 1) * kTrajectoryStride) * dt;
      const Vec3 p = pose.to_local(kin.root(tf).ground());
      row[S.control_columns[2 * k]] = static_cast<float>(p.x);
      row[S.control_columns[2 * k + 1]] = static_cast<float>(p.z);
    }
  }
  if (!all_finite<float>(clip.frames.data)) throw NumericError("generate_gait: non-finite frame produced");
  return clip;
}

/// Default suite of gaits used for training data.
inline std::vector<GaitSpec> gait_suite(std::uint64_t seed, double seconds_per_clip) {
  std::vector<GaitSpec> out;
  std::uint64_t k = 0;
  for (GaitType g : {GaitType::walk, GaitType::trot, GaitType::gallop, GaitType::turn, GaitType::idle})
    out.push_back(GaitSpec::preset(g, Rng::mix(seed + (++k)), seconds_per_clip));
  GaitSpec right_trot = GaitSpec::preset(GaitType::trot, Rng::mix(seed + (++k)), seconds_per_clip);
  right_trot.type = GaitType::turn;
  right_trot.turn_deg_s = -45.0;
  out.push_back(right_trot);
  return out;
}

struct PairRef {
  std::size_t clip;
  std::size_t frame;  // x = frames[frame], y = frames[frame + 1]
};

struct MotionDataset {
  std::shared_ptr<const SkeletonSchema> schema;
  std::vector<MotionClip> clips;
  std::vector<PairRef> train_pairs;
  std::vector<PairRef> val_pairs;
  Normalization<float> stats;
  Matrix<float> x_train, y_train, x_val, y_val;  // normalized

  std::size_t pair_count() const { return train_pairs.size() + val_pairs.size(); }
};

/// Consecutive-frame pairs per clip. The first `train_fraction` of each clip's
/// pairs (contiguous) train, the tail validates; statistics use training pairs only.
inline MotionDataset build_dataset(std::vector<MotionClip> clips, double train_fraction = 0.9) {
  if (clips.empty()) throw ConfigError("build_dataset: no clips");
  MotionDataset ds;
  ds.schema = clips.front().schema;
  if (!ds.schema) throw ConfigError("build_dataset: clip without schema");
  const std::size_t d = ds.schema->dim();
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& clip = clips[c];
    if (!clip.schema || !(*clip.schema == *ds.schema) || clip.frames.cols != d)
      throw ConfigError("build_dataset: clip '" + clip.id + "' does not share the dataset schema");
    if (clip.frames.rows < 2) throw ConfigError("build_dataset: clip '" + clip.id + "' has fewer than 2 frames");
    const std::size_t pairs = clip.frames.rows - 1;
    const std::size_t val = static_cast<std::size_t>(std::floor((1.0 - train_fraction) * static_cast<double>(pairs)));
    for (std::size_t t = 0; t < pairs; ++t) (t < pairs - val ? ds.train_pairs : ds.val_pairs).push_back({c, t});
  }
  ds.clips = std::move(clips);

  const auto stats_of = [&](std::size_t offset) {
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    const double n = static_cast<double>(ds.train_pairs.size());
    for (const auto& p : ds.train_pairs) {
      const auto row = ds.clips[p.clip].frames.row(p.frame + offset);
      for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
    }
    for (double& m : mean) m /= n;
    for (const auto& p : ds.train_pairs) {
      const auto row = ds.clips[p.clip].frames.row(p.frame + offset);
      for (std::size_t c = 0; c < d; ++c) var[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
    }
    std::vector<float> m(d), s(d);
    for (std::size_t c = 0; c < d; ++c) {
      m[c] = static_cast<float>(mean[c]);
      s[c] = static_cast<float>(std::max(std::sqrt(var[c] / n), 1e-6));
    }
    return std::pair{m, s};
  };
  std::tie(ds.stats.in_mean, ds.stats.in_std) = stats_of(0);
  std::tie(ds.stats.out_mean, ds.stats.out_std) = stats_of(1);

  const auto fill = [&](const std::vector<PairRef>& pairs, Matrix<float>& x, Matrix<float>& y) {
    x = Matrix<float>(pairs.size(), d);
    y = Matrix<float>(pairs.size(), d);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto xs = ds.clips[pairs[i].clip].frames.row(pairs[i].frame);
      const auto ys = ds.clips[pairs[i].clip].frames.row(pairs[i].frame + 1);
      for (std::size_t c = 0; c < d; ++c) {
        x(i, c) = (xs[c] - ds.stats.in_mean[c]) / ds.stats.in_std[c];
        y(i, c) = (ys[c] - ds.stats.out_mean[c]) / ds.stats.out_std[c];
      }
    }
  };
  fill(ds.train_pairs, ds.x_train, ds.y_train);
  fill(ds.val_pairs, ds.x_val, ds.y_val);
  return ds;
}

/// Rows 1..T of a clip's control columns: the user signal for T generated frames.
inline Matrix<float> control_series(const MotionClip& clip, std::size_t frames) {
  const auto& cols = clip.schema->control_columns;
  if (frames + 1 > clip.frames.rows) throw ShapeError("control_series: clip shorter than requested rollout");
  Matrix<float> out(frames, cols.size());
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < cols.size(); ++k) out(t, k) = clip.frames(t + 1, cols[k]);
  return out;
}

struct Rollout {
  MotionClip clip;
  std::vector<std::vector<float>> omegas;  // one per generated frame
};

template <typename T>
const MoENetwork<T>& base_network(const MoENetwork<T>& net) {
  return net;
}

/// Autoregressive generation: frame t+1 = denormalize(predict(normalize(frame t))),
/// with the control columns overwritten from `control` row t.
template <typename Model>
Rollout rollout(const Model& model, std::span<const float> seed_frame, const Matrix<float>& control,
                std::size_t frames, std::shared_ptr<const SkeletonSchema> schema, std::string label = "rollout") {
  const MoENetwork<float>& net = base_network(model);
  if (!schema) throw ConfigError("rollout: null schema");
  if (seed_frame.size() != schema->dim() || net.config.d_in != schema->dim() || net.config.d_out != schema->dim())
    throw ShapeError("rollout: seed frame / network / schema dimensions disagree");
  if (control.rows < frames || control.cols != schema->control_columns.size())
    throw ShapeError("rollout: control series has " + std::to_string(control.rows) + " rows, need " +
                     std::to_string(frames));
  Rollout out;
  out.clip.schema = schema;
  out.clip.id = label;
  out.clip.label = label;
  out.clip.frames = Matrix<float>(frames + 1, schema->dim());
  std::copy(seed_frame.begin(), seed_frame.end(), out.clip.frames.row(0).begin());
  out.omegas.reserve(frames);
  for (std::size_t t = 1; t <= frames; ++t) {
    const auto prev = out.clip.frames.row(t - 1);
    const auto x = normalize_input(net, std::span<const float>(prev));
    const auto omega = gate(model, std::span<const float>(x));
    const auto y = predict_with_omega(model, std::span<const float>(x), std::span<const float>(omega));
    auto next = denormalize_output(net, std::span<const float>(y));
    for (std::size_t k = 0; k < schema->control_columns.size(); ++k) next[schema->control_columns[k]] = control(t - 1, k);
    if (!all_finite<float>(next)) throw NumericError("rollout diverged: non-finite values at frame " + std::to_string(t));
    std::copy(next.begin(), next.end(), out.clip.frames.row(t).begin());
    out.omegas.push_back(omega);
  }
  return out;
}

}  // namespace mannprune
