#pragma once

// Stationary points of the rescaled strip functional
//
//   J^h(y) = \int_Omega W(grad_h y) - h^2 g(x1).y dx,   Omega = (0,L) x (-1/2, 1/2),
//   grad_h = (d_1, d_2 / h),  y(0, x2) = (0, h x2),
//
// discretized with bilinear quadrilaterals and 2x2 Gauss quadrature. The
// thickness h never changes the mesh, it only enters through grad_h and the
// clamped boundary data.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thinbeam/energy.hpp"
#include "thinbeam/errors.hpp"
#include "thinbeam/load.hpp"
#include "thinbeam/mat2.hpp"

namespace thinbeam {

/// Uniform nx x ny grid of bilinear elements on (0,L) x (-1/2,1/2).
/// Node (i, j) has id j*(nx+1) + i; element (i, j) has id j*nx + i.
struct StripMesh {
  double L = 1.0;
  int nx = 4;
  int ny = 2;

  static constexpr int qp_per_element = 4;

  int num_nodes() const { return (nx + 1) * (ny + 1); }
  int num_elements() const { return nx * ny; }
  int num_dofs() const { return 2 * num_nodes(); }
  int node(int i, int j) const { return j * (nx + 1) + i; }
  double dx() const { return L / nx; }
  double dy() const { return 1.0 / ny; }
  double x1(int i) const { return L * i / nx; }
  double x2(int j) const { return -0.5 + static_cast<double>(j) / ny; }
  Vec2 position(int node_id) const { return {x1(node_id % (nx + 1)), x2(node_id / (nx + 1))}; }

  std::array<int, 4> element_nodes(int e) const {
    const int i = e % nx, j = e / nx;
    return {node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)};
  }

  /// Gauss abscissa in (-1,1) for local index 0/1.
  static double gauss(int g) { return g == 0 ? -1.0 / std::sqrt(3.0) : 1.0 / std::sqrt(3.0); }

  /// Quadrature point q = 2*gy + gx of element e.
  Vec2 qp_position(int e, int q) const {
    const int i = e % nx, j = e / nx;
    return {(i + 0.5 * (1.0 + gauss(q % 2))) * dx(), x2(j) + 0.5 * (1.0 + gauss(q / 2)) * dy()};
  }
  double qp_weight() const { return 0.25 * dx() * dy(); }

  /// Number of x1-abscissae carried by quadrature points (two per element column).
  int num_qp_columns() const { return 2 * nx; }
  int qp_column(int e, int q) const { return 2 * (e % nx) + q % 2; }
  double qp_column_x1(int c) const { return (c / 2 + 0.5 * (1.0 + gauss(c % 2))) * dx(); }
};

inline StripMesh build_mesh(double length, int nx, int ny) {
  if (!(length > 0.0) || !std::isfinite(length)) throw ConfigError("strip.L must be positive");
  if (nx < 4) throw ConfigError("strip.nx must be >= 4");
  if (ny < 2) throw ConfigError("strip.ny must be >= 2");
  return StripMesh{length, nx, ny};
}

/// Shape functions of the reference bilinear element at quadrature point q.
struct ShapeAtQp {
  std::array<double, 4> n{};
  std::array<double, 4> dn1{};  // d/dx1
  std::array<double, 4> dn2{};  // d/dx2 (unscaled)
};

inline ShapeAtQp shape_at(const StripMesh &mesh, double xi, double eta) {
  ShapeAtQp s;
  constexpr std::array<double, 4> sx{-1.0, 1.0, 1.0, -1.0};
  constexpr std::array<double, 4> sy{-1.0, -1.0, 1.0, 1.0};
  for (int a = 0; a < 4; ++a) {
    s.n[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sy[a] * eta);
    s.dn1[a] = 0.25 * sx[a] * (1.0 + sy[a] * eta) * 2.0 / mesh.dx();
    s.dn2[a] = 0.25 * sy[a] * (1.0 + sx[a] * xi) * 2.0 / mesh.dy();
  }
  return s;
}

inline std::array<ShapeAtQp, 4> shapes_at_qps(const StripMesh &mesh) {
  std::array<ShapeAtQp, 4> out;
  for (int q = 0; q < 4; ++q) out[q] = shape_at(mesh, StripMesh::gauss(q % 2), StripMesh::gauss(q / 2));
  return out;
}

/// Nodal deformation of the rescaled strip for thickness h, stored as the
/// displacement u = y - (x1, h x2) from the undeformed state so that gradients
/// near the identity do not lose digits to cancellation.
struct DeformationField {
  StripMesh mesh;
  double h = 0.1;
  std::vector<Vec2> u;

  /// y = (x1, h x2); satisfies the clamped boundary condition exactly.
  static DeformationField rigid(const StripMesh &mesh, double h) {
    return DeformationField{mesh, h, std::vector<Vec2>(mesh.num_nodes())};
  }

  static DeformationField from_positions(const StripMesh &mesh, double h, const std::vector<Vec2> &y) {
    if (static_cast<int>(y.size()) != mesh.num_nodes()) throw ConfigError("node count does not match the mesh");
    DeformationField d = rigid(mesh, h);
    for (int n = 0; n < mesh.num_nodes(); ++n) d.u[n] = y[n] - d.reference(n);
    return d;
  }

  Vec2 reference(int n) const {
    const Vec2 p = mesh.position(n);
    return {p.x, h * p.y};
  }
  Vec2 y(int n) const { return reference(n) + u[n]; }

  /// grad_h u = grad_h y - Id at quadrature point q of element e.
  Mat2 displacement_gradient(int e, int q, const std::array<ShapeAtQp, 4> &shapes) const {
    const auto nodes = mesh.element_nodes(e);
    const ShapeAtQp &s = shapes[q];
    Mat2 a;
    for (int k = 0; k < 4; ++k) {
      const Vec2 &v = u[nodes[k]];
      a.a11 += v.x * s.dn1[k];
      a.a21 += v.y * s.dn1[k];
      a.a12 += v.x * s.dn2[k] / h;
      a.a22 += v.y * s.dn2[k] / h;
    }
    return a;
  }
  Mat2 displacement_gradient(int e, int q) const { return displacement_gradient(e, q, shapes_at_qps(mesh)); }

  /// grad_h y at quadrature point q of element e.
  Mat2 scaled_gradient(int e, int q) const { return Mat2::identity() + displacement_gradient(e, q); }

  /// Unscaled gradient (d_1 y, d_2 y).
  Mat2 gradient(int e, int q) const {
    Mat2 f = scaled_gradient(e, q);
    f.a12 *= h;
    f.a22 *= h;
    return f;
  }

  /// y at a quadrature point (bilinear interpolation).
  Vec2 value_at_qp(int e, int q) const {
    const auto nodes = mesh.element_nodes(e);
    const ShapeAtQp s = shapes_at_qps(mesh)[q];
    const Vec2 p = mesh.qp_position(e, q);
    Vec2 v{p.x, h * p.y};
    for (int k = 0; k < 4; ++k) v += s.n[k] * u[nodes[k]];
    return v;
  }

  bool is_clamped_node(int node_id) const { return node_id % (mesh.nx + 1) == 0; }
};

struct SolverConfig {
  double newton_tol = 1e-10;   // sup-norm of the normalized residual (see StripAssembler::normalized)
  int max_iters = 50;          // Newton iterations per load step
  int load_steps = 10;
  double min_load_step = 1e-4;
  double det_guard = 0.1;      // reject states with det grad_h y <= det_guard
  double armijo = 1e-4;
};

struct SolverReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  std::vector<std::pair<double, int>> path;  // (load factor or h, Newton iterations)
  double elastic = 0.0;                      // \int W(grad_h y)
  double total = 0.0;                        // J^h(y)
  std::string message;
};

struct StripSolution {
  DeformationField field;
  SolverReport report;
};

struct ScaledEnergy {
  double elastic = 0.0;
  double total = 0.0;
};

/// Residual, tangent and energy of the discrete functional for one density.
/// `clamped = false` releases the Dirichlet edge (used for objectivity checks).
template <StoredEnergy W>
class StripAssembler {
 public:
  StripAssembler(const StripMesh &mesh, double h, LoadProfile load, W density, bool clamped = true,
                 double det_guard = 0.1)
      : mesh_(mesh),
        h_(h),
        load_(std::move(load)),
        w_(std::move(density)),
        clamped_(clamped),
        det_guard_(det_guard),
        shapes_(shapes_at_qps(mesh)) {
    if (!(h > 0.0)) throw ConfigError("strip.h must be positive");
    if (!load_.covers(mesh.L)) throw ConfigError("load profile does not cover [0, L]");
    build_load_vector();
  }

  const StripMesh &mesh() const { return mesh_; }
  double h() const { return h_; }
  const W &density() const { return w_; }
  bool clamped() const { return clamped_; }
  void set_load_factor(double f) { load_factor_ = f; }
  double load_factor() const { return load_factor_; }

  /// Consistent nodal load vector h^2 \int g N (without the load factor).
  const Eigen::VectorXd &load_vector() const { return load_vec_; }

  /// max_A |r_A| / (h \int N_A): the residual of the weak form written for the
  /// scaled stress DW/h, per unit area. Raw nodal residuals shrink like h^2
  /// with the load, so tolerances are applied to this quantity.
  double normalized(const Eigen::VectorXd &r) const {
    double m = 0.0;
    for (int n = 0; n < mesh_.num_nodes(); ++n) {
      const double s = 1.0 / (h_ * node_area_[n]);
      m = std::max({m, std::abs(r[2 * n]) * s, std::abs(r[2 * n + 1]) * s});
    }
    return m;
  }

  bool is_fixed_dof(int dof) const { return clamped_ && (dof / 2) % (mesh_.nx + 1) == 0; }

  void check_guard(const DeformationField &y) const {
    for (int e = 0; e < mesh_.num_elements(); ++e)
      for (int q = 0; q < 4; ++q) {
        const double d = detail::det_offset(y.displacement_gradient(e, q, shapes_));
        if (!(d > det_guard_)) throw StepRejected(e, q, d);
      }
  }

  /// dJ/dy with clamped rows zeroed.
  Eigen::VectorXd residual(const DeformationField &y) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mesh_.num_dofs());
    const double wq = mesh_.qp_weight();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto nodes = mesh_.element_nodes(e);
      for (int q = 0; q < 4; ++q) {
        const Mat2 a = y.displacement_gradient(e, q, shapes_);
        const double d = detail::det_offset(a);
        if (!(d > det_guard_)) throw StepRejected(e, q, d);
        const Mat2 p = stress_near_identity(w_, a);
        const ShapeAtQp &s = shapes_[q];
        for (int a = 0; a < 4; ++a) {
          const double g1 = s.dn1[a], g2 = s.dn2[a] / h_;
          r[2 * nodes[a]] += wq * (p.a11 * g1 + p.a12 * g2);
          r[2 * nodes[a] + 1] += wq * (p.a21 * g1 + p.a22 * g2);
        }
      }
    }
    r -= load_factor_ * load_vec_;
    zero_fixed(r);
    return r;
  }

  /// d^2 J/dy^2 with clamped rows/columns replaced by the identity.
  Eigen::SparseMatrix<double> tangent(const DeformationField &y) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh_.num_elements()) * 64 + mesh_.num_dofs());
    const double wq = mesh_.qp_weight();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto nodes = mesh_.element_nodes(e);
      std::array<std::array<double, 8>, 8> ke{};
      for (int q = 0; q < 4; ++q) {
        const Mat2 a = y.displacement_gradient(e, q, shapes_);
        const double d = detail::det_offset(a);
        if (!(d > det_guard_)) throw StepRejected(e, q, d);
        const Tangent4 c = tangent_of(w_, Mat2::identity() + a);
        const ShapeAtQp &s = shapes_[q];
        for (int a = 0; a < 4; ++a) {
          const std::array<double, 2> ga{s.dn1[a], s.dn2[a] / h_};
          for (int b = 0; b < 4; ++b) {
            const std::array<double, 2> gb{s.dn1[b], s.dn2[b] / h_};
            for (int i = 0; i < 2; ++i)
              for (int k = 0; k < 2; ++k) {
                double v = 0.0;
                for (int j = 0; j < 2; ++j)
                  for (int l = 0; l < 2; ++l) v += c(2 * i + j, 2 * k + l) * ga[j] * gb[l];
                ke[2 * a + i][2 * b + k] += wq * v;
              }
          }
        }
      }
      for (int a = 0; a < 8; ++a) {
        const int ra = 2 * nodes[a / 2] + a % 2;
        if (is_fixed_dof(ra)) continue;
        for (int b = 0; b < 8; ++b) {
          const int cb = 2 * nodes[b / 2] + b % 2;
          if (is_fixed_dof(cb)) continue;
          trip.emplace_back(ra, cb, ke[a][b]);
        }
      }
    }
    for (int dof = 0; dof < mesh_.num_dofs(); ++dof)
      if (is_fixed_dof(dof)) trip.emplace_back(dof, dof, 1.0);
    Eigen::SparseMatrix<double> k(mesh_.num_dofs(), mesh_.num_dofs());
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
  }

  ScaledEnergy energy(const DeformationField &y) const {
    ScaledEnergy out;
    const double wq = mesh_.qp_weight();
    for (int e = 0; e < mesh_.num_elements(); ++e)
      for (int q = 0; q < 4; ++q)
        out.elastic += wq * energy_near_identity(w_, y.displacement_gradient(e, q, shapes_));
    double work = 0.0;
    for (int n = 0; n < mesh_.num_nodes(); ++n) {
      const Vec2 ref = y.reference(n);
      work += load_vec_[2 * n] * ref.x + load_vec_[2 * n + 1] * ref.y;
    }
    for (int n = 0; n < mesh_.num_nodes(); ++n)
      work += load_vec_[2 * n] * y.u[n].x + load_vec_[2 * n + 1] * y.u[n].y;
    out.total = out.elastic - load_factor_ * work;
    return out;
  }

  /// J^h with the determinant guard applied; throws StepRejected outside it.
  double guarded_total(const DeformationField &y) const {
    check_guard(y);
    return energy(y).total;
  }

 private:
  void build_load_vector() {
    load_vec_ = Eigen::VectorXd::Zero(mesh_.num_dofs());
    node_area_.assign(mesh_.num_nodes(), 0.0);
    const double wq = mesh_.qp_weight();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto nodes = mesh_.element_nodes(e);
      for (int q = 0; q < 4; ++q) {
        const Vec2 g = load_.at(mesh_.qp_position(e, q).x);
        for (int a = 0; a < 4; ++a) {
          node_area_[nodes[a]] += wq * shapes_[q].n[a];
          load_vec_[2 * nodes[a]] += h_ * h_ * wq * g.x * shapes_[q].n[a];
          load_vec_[2 * nodes[a] + 1] += h_ * h_ * wq * g.y * shapes_[q].n[a];
        }
      }
    }
  }

  void zero_fixed(Eigen::VectorXd &r) const {
    if (!clamped_) return;
    for (int j = 0; j <= mesh_.ny; ++j) {
      const int n = mesh_.node(0, j);
      r[2 * n] = 0.0;
      r[2 * n + 1] = 0.0;
    }
  }

  StripMesh mesh_;
  double h_;
  LoadProfile load_;
  W w_;
  bool clamped_;
  double det_guard_;
  std::array<ShapeAtQp, 4> shapes_;
  Eigen::VectorXd load_vec_;
  std::vector<double> node_area_;
  double load_factor_ = 1.0;
};

template <StoredEnergy W>
Eigen::VectorXd residual(const DeformationField &y, const LoadProfile &g, const W &w) {
  return StripAssembler<W>(y.mesh, y.h, g, w).residual(y);
}

template <StoredEnergy W>
Eigen::SparseMatrix<double> tangent(const DeformationField &y, const W &w) {
  return StripAssembler<W>(y.mesh, y.h, LoadProfile{}, w).tangent(y);
}

template <StoredEnergy W>
ScaledEnergy scaled_energy(const DeformationField &y, const LoadProfile &g, const W &w) {
  return StripAssembler<W>(y.mesh, y.h, g, w).energy(y);
}

inline double sup_norm(const Eigen::VectorXd &v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

namespace detail {

inline void add_step(DeformationField &y, const Eigen::VectorXd &d, double alpha) {
  for (std::size_t n = 0; n < y.u.size(); ++n) {
    y.u[n].x += alpha * d[2 * n];
    y.u[n].y += alpha * d[2 * n + 1];
  }
}

struct NewtonOutcome {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Damped Newton at the assembler's current load factor. `y` is updated in
/// place only through accepted steps.
template <StoredEnergy W>
NewtonOutcome newton(const StripAssembler<W> &asmb, DeformationField &y, const SolverConfig &cfg) {
  NewtonOutcome out;
  Eigen::VectorXd r;
  try {
    r = asmb.residual(y);
  } catch (const StepRejected &) {
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }
  out.residual = asmb.normalized(r);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;
  while (out.residual > cfg.newton_tol) {
    if (out.iterations >= cfg.max_iters) return out;
    ++out.iterations;
    const Eigen::SparseMatrix<double> k = asmb.tangent(y);
    if (!analyzed) {
      solver.analyzePattern(k);
      analyzed = true;
    }
    solver.factorize(k);
    Eigen::VectorXd d;
    if (solver.info() == Eigen::Success) d = solver.solve(-r);
    double slope = d.size() ? r.dot(d) : 1.0;
    if (!(slope < 0.0) || !d.allFinite()) {
      d = -r;  // not a descent direction: fall back to steepest descent
      slope = -r.squaredNorm();
    }
    const double j0 = asmb.guarded_total(y);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40 && !accepted; ++ls, alpha *= 0.5) {
      DeformationField trial = y;
      add_step(trial, d, alpha);
      try {
        const double j1 = asmb.guarded_total(trial);
        Eigen::VectorXd rt;
        bool ok = j1 <= j0 + cfg.armijo * alpha * slope;
        if (!ok) {
          // Near convergence the energy decrease drops below rounding of J;
          // a decreasing residual is then the meaningful criterion.
          rt = asmb.residual(trial);
          ok = asmb.normalized(rt) < (1.0 - cfg.armijo * alpha) * out.residual;
        }
        if (ok) {
          if (rt.size() == 0) rt = asmb.residual(trial);
          y = std::move(trial);
          r = std::move(rt);
          out.residual = asmb.normalized(r);
          accepted = true;
        }
      } catch (const StepRejected &) {
      }
    }
    if (!accepted) return out;
  }
  out.converged = true;
  return out;
}

}  // namespace detail

/// Nodal interpolation of a solution onto another mesh of the same strip, with
/// the through-thickness deviation from the midline rescaled from prev.h to h
/// and the clamped edge re-imposed.
inline DeformationField warm_start_from(const DeformationField &prev, const StripMesh &mesh, double h) {
  const StripMesh &pm = prev.mesh;
  auto sample = [&](double x1, double x2) {
    const double fx = std::clamp(x1 / pm.dx(), 0.0, static_cast<double>(pm.nx));
    const double fy = std::clamp((x2 + 0.5) / pm.dy(), 0.0, static_cast<double>(pm.ny));
    const int i = std::min(static_cast<int>(fx), pm.nx - 1), j = std::min(static_cast<int>(fy), pm.ny - 1);
    const double s = fx - i, t = fy - j;
    return (1 - s) * (1 - t) * prev.u[pm.node(i, j)] + s * (1 - t) * prev.u[pm.node(i + 1, j)] +
           s * t * prev.u[pm.node(i + 1, j + 1)] + (1 - s) * t * prev.u[pm.node(i, j + 1)];
  };
  // y = ybar + ratio (y_prev - ybar) rewritten in displacements, since the
  // reference map scales the same way; rigid input gives exactly zero
  DeformationField out = DeformationField::rigid(mesh, h);
  const double ratio = h / prev.h;
  for (int j = 0; j <= mesh.ny; ++j)
    for (int i = 1; i <= mesh.nx; ++i) {
      const double x1 = mesh.x1(i), x2 = mesh.x2(j);
      const Vec2 mid = sample(x1, 0.0);
      out.u[mesh.node(i, j)] = mid + ratio * (sample(x1, x2) - mid);
    }
  return out;
}

/// Newton iteration with backtracking on J^h and load continuation from the
/// rigid state (factor 0 -> 1 in cfg.load_steps steps, halved on failure).
/// With a warm start the full load is attempted first.
template <StoredEnergy W>
StripSolution solve_stationary(const StripMesh &mesh, double h, const LoadProfile &g, const W &w,
                               const SolverConfig &cfg = {}, const DeformationField *warm_start = nullptr) {
  if (!(h > 0.0 && h <= 0.5)) throw ConfigError("strip.h must lie in (0, 0.5]");
  if (!(cfg.newton_tol > 0.0)) throw ConfigError("solver.newton_tol must be positive");
  if (cfg.load_steps < 1 || cfg.max_iters < 1) throw ConfigError("solver.load_steps and solver.max_iters must be >= 1");

  StripAssembler<W> asmb(mesh, h, g, w, true, cfg.det_guard);
  StripSolution sol{DeformationField::rigid(mesh, h), {}};
  SolverReport &rep = sol.report;

  auto finish = [&](bool converged, double res, std::string msg) {
    asmb.set_load_factor(1.0);
    rep.converged = converged;
    rep.residual = res;
    rep.message = std::move(msg);
    const ScaledEnergy en = asmb.energy(sol.field);
    rep.elastic = en.elastic;
    rep.total = en.total;
    return sol;
  };

  if (warm_start != nullptr) {
    if (warm_start->mesh.nx != mesh.nx || warm_start->mesh.ny != mesh.ny || warm_start->mesh.L != mesh.L ||
        warm_start->h != h)
      throw ConfigError("warm start must live on the same mesh and thickness");
    DeformationField trial = *warm_start;
    asmb.set_load_factor(1.0);
    const auto res = detail::newton(asmb, trial, cfg);
    rep.iterations += res.iterations;
    if (res.converged) {
      sol.field = std::move(trial);
      rep.path.emplace_back(1.0, res.iterations);
      return finish(true, res.residual, "converged from warm start");
    }
  }

  double factor = 0.0;
  double step = 1.0 / cfg.load_steps;
  double last_res = 0.0;
  while (factor < 1.0) {
    const double target = std::min(1.0, factor + step);
    asmb.set_load_factor(target);
    DeformationField trial = sol.field;
    const auto res = detail::newton(asmb, trial, cfg);
    rep.iterations += res.iterations;
    last_res = res.residual;
    if (res.converged) {
      sol.field = std::move(trial);
      factor = target;
      rep.path.emplace_back(target, res.iterations);
    } else {
      step *= 0.5;
      if (step < cfg.min_load_step) {
        asmb.set_load_factor(1.0);
        double r1 = last_res;
        try {
          r1 = asmb.normalized(asmb.residual(sol.field));
        } catch (const StepRejected &) {
        }
        return finish(false, r1,
                      "load step fell below " + std::to_string(cfg.min_load_step) + " at factor " +
                          std::to_string(factor));
      }
    }
  }
  asmb.set_load_factor(1.0);
  return finish(true, asmb.normalized(asmb.residual(sol.field)), "converged");
}

}  // namespace thinbeam
