#pragma once

// Selective-window training loss:
//   L = w_rec L_rec + w_pelvis L_pelvis + w_contact L_contact + w_collision L_collision
// L_rec is taken in normalized space; the other terms act on the denormalized
// prediction through root integration and forward kinematics.

#include <span>
#include <vector>

#include "modmo/diffusion.hpp"
#include "modmo/geometry.hpp"
#include "modmo/pose.hpp"

namespace modmo {

struct LossWeights {
  double w_rec = 1.0;
  double w_pelvis = 1.0;
  double w_contact = 1.0;
  double w_collision = 1.0;
  int k_frames = 10;
  double contact_max = 0.5;  // clamp for the contact gap (m)
  std::vector<int> contact_joints = {kPelvis, kLeftHip, kRightHip};

  void validate() const {
    require(w_rec >= 0 && w_pelvis >= 0 && w_contact >= 0 && w_collision >= 0, ErrorCode::InvalidArgument,
            "loss weights must be non-negative");
    require(k_frames > 0, ErrorCode::BadWindow, "k_frames must be positive");
    require(contact_max > 0, ErrorCode::InvalidArgument, "contact_max must be positive");
    for (int j : contact_joints)
      require(j >= 0 && j < kNumJoints, ErrorCode::InvalidArgument, "contact joint out of range");
  }

  bool needs_object() const { return w_contact > 0 || w_collision > 0; }
};

struct LossBreakdown {
  double rec = 0, pelvis = 0, contact = 0, collision = 0, total = 0;
};

struct LossContext {
  const NormStats* stats = nullptr;
  const ObjectGeometry* object = nullptr;
  const Skeleton* skeleton = &default_skeleton();
  const BodyProxy* proxy = &default_body_proxy();
  Vec3 root_start = default_root_start();
};

namespace detail {

inline MatD denorm_rows(const MatD& x, const NormStats& s) {
  return (x.array().rowwise() * s.std.transpose().array()).matrix().rowwise() + s.mean.transpose();
}

// Proxy spheres that sit on a contact joint.
inline std::vector<std::size_t> contact_spheres(const BodyProxy& proxy, const std::vector<int>& joints) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < proxy.spheres.size(); ++i)
    if (std::find(joints.begin(), joints.end(), proxy.spheres[i].joint) != joints.end()) out.push_back(i);
  return out;
}

}  // namespace detail

// Loss and (optionally) its gradient w.r.t. the normalized prediction.
template <class T>
LossBreakdown loss_sw(const Mat<T>& x0_pred, const Mat<T>& x0_gt, const LossContext& ctx, std::span<const int> mask,
                      const LossWeights& w, Mat<T>* grad = nullptr) {
  w.validate();
  require(ctx.stats != nullptr, ErrorCode::InvalidArgument, "loss needs normalization stats");
  require(x0_pred.rows() == x0_gt.rows() && x0_pred.cols() == x0_gt.cols() && x0_pred.cols() == kFrameDim &&
              x0_pred.rows() > 0,
          ErrorCode::ShapeMismatch, "prediction and target must both be N x 135");
  require(!w.needs_object() || ctx.object != nullptr, ErrorCode::MissingObject,
          "contact/collision terms need an object");
  const Eigen::Index n = x0_pred.rows();
  for (int k : mask) require(k >= 0 && k < n, ErrorCode::BadWindow, "mask frame out of range");

  const MatD pred = x0_pred.template cast<double>();
  const MatD gt = x0_gt.template cast<double>();
  const NormStats& st = *ctx.stats;
  const Skeleton& sk = *ctx.skeleton;

  LossBreakdown out;
  MatD g_norm = MatD::Zero(n, kFrameDim);  // gradient in normalized space
  MatD g_raw = MatD::Zero(n, kFrameDim);   // gradient in denormalized space

  // L_rec: mean squared error over all entries.
  const MatD diff = pred - gt;
  out.rec = diff.squaredNorm() / static_cast<double>(diff.size());
  g_norm += (w.w_rec * 2.0 / static_cast<double>(diff.size())) * diff;

  const MatD raw = detail::denorm_rows(pred, st);
  const MatD raw_gt = detail::denorm_rows(gt, st);

  // L_pelvis: final integrated root position and final root rotation slots.
  {
    const Vec3 p_pred = ctx.root_start + raw.col(kTransOffset).sum() * Vec3::UnitX() +
                        raw.col(kTransOffset + 1).sum() * Vec3::UnitY() + raw.col(kTransOffset + 2).sum() * Vec3::UnitZ();
    const Vec3 p_gt = ctx.root_start + raw_gt.col(kTransOffset).sum() * Vec3::UnitX() +
                      raw_gt.col(kTransOffset + 1).sum() * Vec3::UnitY() +
                      raw_gt.col(kTransOffset + 2).sum() * Vec3::UnitZ();
    const Vec3 dp = p_pred - p_gt;
    const RowVec<double> dr = raw.row(n - 1).head(kRotDims) - raw_gt.row(n - 1).head(kRotDims);
    out.pelvis = dp.squaredNorm() + dr.squaredNorm();
    for (int c = 0; c < 3; ++c) g_raw.col(kTransOffset + c).array() += w.w_pelvis * 2.0 * dp(c);
    g_raw.row(n - 1).head(kRotDims) += w.w_pelvis * 2.0 * dr;
  }

  if (!mask.empty() && ctx.object) {
    const ObjectGeometry& obj = *ctx.object;
    const BodyProxy& proxy = *ctx.proxy;
    const auto contact = detail::contact_spheres(proxy, w.contact_joints);

    // Root positions: pos_k = start + sum_{i <= k} delta_i.
    std::vector<Vec3> roots(static_cast<std::size_t>(n));
    Vec3 acc = ctx.root_start;
    for (Eigen::Index k = 0; k < n; ++k) {
      acc += raw.row(k).segment<3>(kTransOffset).transpose();
      roots[static_cast<std::size_t>(k)] = acc;
    }

    const double n_contact = static_cast<double>(mask.size() * contact.size());
    const double n_coll = static_cast<double>(mask.size() * proxy.spheres.size());
    std::vector<Vec3> droot(static_cast<std::size_t>(n), Vec3::Zero());

    for (int k : mask) {
      const auto row = raw.row(k);
      const FkResult fk = forward_kinematics_smooth(row, sk, roots[static_cast<std::size_t>(k)]);
      JointPositions dpos;
      for (auto& v : dpos) v.setZero();
      std::array<Mat3, kNumJoints> dworld;
      for (auto& m : dworld) m.setZero();
      bool touched = false;

      auto push = [&](const ProxySphere& s, const Vec3& dcenter) {
        dpos[static_cast<std::size_t>(s.joint)] += dcenter;
        dworld[static_cast<std::size_t>(s.joint)] += dcenter * s.local_offset.transpose();
        touched = true;
      };

      for (std::size_t i : contact) {
        const auto& s = proxy.spheres[i];
        Vec3 gsdf;
        const double d = sdf_with_gradient(obj, proxy_center(s, fk), gsdf) - s.radius;
        out.contact += std::clamp(d, 0.0, w.contact_max) / n_contact;
        if (d > 0.0 && d < w.contact_max && w.w_contact > 0) push(s, (w.w_contact / n_contact) * gsdf);
      }
      for (const auto& s : proxy.spheres) {
        Vec3 gsdf;
        const double d = sdf_with_gradient(obj, proxy_center(s, fk), gsdf) - s.radius;
        if (d < 0.0) {
          out.collision += d * d / n_coll;
          if (w.w_collision > 0) push(s, (w.w_collision * 2.0 * d / n_coll) * gsdf);
        }
      }
      if (!touched) continue;
      RowVec<double> drow = RowVec<double>::Zero(kFrameDim);
      droot[static_cast<std::size_t>(k)] += forward_kinematics_smooth_backward(row, fk, sk, dpos, drow, &dworld);
      g_raw.row(k) += drow;
    }
    // Reverse cumulative sum carries root gradients back to every delta.
    Vec3 carry = Vec3::Zero();
    for (Eigen::Index k = n - 1; k >= 0; --k) {
      carry += droot[static_cast<std::size_t>(k)];
      g_raw.row(k).segment<3>(kTransOffset) += carry.transpose();
    }
  }

  out.total = w.w_rec * out.rec + w.w_pelvis * out.pelvis + w.w_contact * out.contact + w.w_collision * out.collision;
  if (grad) {
    g_norm += (g_raw.array().rowwise() * st.std.transpose().array()).matrix();
    *grad = g_norm.template cast<T>();
  }
  return out;
}

}  // namespace modmo
