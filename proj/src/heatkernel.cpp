#include "hypobridge/heatkernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hypobridge/parallel.hpp"
#include "hypobridge/rng.hpp"
#include "hypobridge/sde.hpp"
#include "hypobridge/stats.hpp"

namespace hypobridge {

std::size_t MeshSpec::node_count() const {
  std::size_t c = 1;
  for (int d = 0; d < dim(); ++d) c *= static_cast<std::size_t>(n[d]);
  return c;
}

double MeshSpec::cell_volume() const {
  double v = 1.0;
  for (int d = 0; d < dim(); ++d) v *= node_spacing(d);
  return v;
}

namespace {

double node_spacing_of(const MeshSpec& m, int d) {
  return m.periodic ? (m.hi[d] - m.lo[d]) / m.n[d] : (m.hi[d] - m.lo[d]) / (m.n[d] - 1);
}

}  // namespace

double MeshSpec::node_spacing(int d) const { return node_spacing_of(*this, d); }

namespace {

constexpr int kMaxDim = 3;

/// Multilinear interpolation; returns 0 outside a non-periodic box.
double interp_mesh(const MeshSpec& mesh, const Vec& values, const VecRef& p) {
  int dim = mesh.dim();
  int base[kMaxDim], next[kMaxDim];
  double frac[kMaxDim];
  for (int d = 0; d < dim; ++d) {
    double dx = node_spacing_of(mesh, d);
    double u = (p[d] - mesh.lo[d]) / dx;
    if (mesh.periodic) {
      double nd = static_cast<double>(mesh.n[d]);
      u -= nd * std::floor(u / nd);
      int i = static_cast<int>(u);
      if (i >= mesh.n[d]) i = mesh.n[d] - 1;
      base[d] = i;
      next[d] = (i + 1) % mesh.n[d];
      frac[d] = u - i;
    } else {
      if (u < 0.0 || u > static_cast<double>(mesh.n[d] - 1)) return 0.0;
      int i = std::min(static_cast<int>(u), mesh.n[d] - 2);
      base[d] = i;
      next[d] = i + 1;
      frac[d] = u - i;
    }
  }
  double out = 0.0;
  int corners = 1 << dim;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t idx = 0, stride = 1;
    for (int d = 0; d < dim; ++d) {
      bool hi = (c >> d) & 1;
      w *= hi ? frac[d] : 1.0 - frac[d];
      idx += stride * static_cast<std::size_t>(hi ? next[d] : base[d]);
      stride *= static_cast<std::size_t>(mesh.n[d]);
    }
    out += w * values[static_cast<Eigen::Index>(idx)];
  }
  return out;
}

double slice_max(const TimeSlice& s) { return s.values.size() ? s.values.maxCoeff() : 0.0; }

// ---------------------------------------------------------------------------
// Grid PDE engine (periodic torus, axis-aligned divergence-free fields)
// ---------------------------------------------------------------------------

struct GridEngine {
  MeshSpec mesh;
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  Vec cxx, cyy;    // squared diffusion coefficients per node (x / y axis)
  Vec b1, b2;      // drift components per node
  bool has_drift = false;
  double dt_max = 0.0;

  GridEngine(const VectorFieldSystem& sys, const GridOptions& opts) {
    if (sys.space.kind != ModelKind::Torus2)
      throw std::invalid_argument("solve_heat_grid: grid solver is Torus2-only");
    mesh.periodic = true;
    mesh.lo = Vec2(0.0, 0.0);
    mesh.hi = sys.space.periods;
    mesh.n = Eigen::Vector2i(opts.nodes_per_axis, opts.nodes_per_axis);
    nx = mesh.n[0];
    ny = mesh.n[1];
    dx = mesh.node_spacing(0);
    dy = mesh.node_spacing(1);
    std::size_t nodes = mesh.node_count();
    cxx = Vec::Zero(nodes);
    cyy = Vec::Zero(nodes);
    b1 = Vec::Zero(nodes);
    b2 = Vec::Zero(nodes);

    Vec f(2), p(2);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        p[0] = mesh.lo[0] + i * dx;
        p[1] = mesh.lo[1] + j * dy;
        std::size_t idx = static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * j;
        for (const auto& field : sys.diffusion) {
          field.eval_into(p, f);
          if (std::abs(f[0]) > 1e-12 && std::abs(f[1]) > 1e-12)
            throw std::invalid_argument(
                "solve_heat_grid: diffusion fields must be axis-aligned on the mesh");
          cxx[idx] += f[0] * f[0];
          cyy[idx] += f[1] * f[1];
        }
        sys.drift.eval_into(p, f);
        b1[idx] = f[0];
        b2[idx] = f[1];
      }
    }
    // Divergence-free expanded form requires each axis coefficient to be
    // constant along its own axis; verify on the mesh.
    for (int j = 0; j < ny; ++j)
      for (int i = 1; i < nx; ++i)
        if (std::abs(cxx[i + static_cast<std::size_t>(nx) * j] - cxx[static_cast<std::size_t>(nx) * j]) > 1e-10)
          throw std::invalid_argument("solve_heat_grid: x-axis field varies along x (not divergence-free)");
    for (int i = 0; i < nx; ++i)
      for (int j = 1; j < ny; ++j)
        if (std::abs(cyy[i + static_cast<std::size_t>(nx) * j] - cyy[i]) > 1e-10)
          throw std::invalid_argument("solve_heat_grid: y-axis field varies along y (not divergence-free)");

    has_drift = b1.cwiseAbs().maxCoeff() > 0.0 || b2.cwiseAbs().maxCoeff() > 0.0;
    double denom = cxx.maxCoeff() / (dx * dx) + cyy.maxCoeff() / (dy * dy) +
                   2.0 * b1.cwiseAbs().maxCoeff() / dx + 2.0 * b2.cwiseAbs().maxCoeff() / dy;
    dt_max = opts.safety / denom;
    if (opts.dt) {
      if (*opts.dt > dt_max) {
        std::ostringstream os;
        os << "solve_heat_grid: requested dt " << *opts.dt
           << " violates the stability bound; use dt <= " << dt_max;
        throw std::invalid_argument(os.str());
      }
      dt_max = *opts.dt;
    }
  }

  std::size_t nearest_node(const VecRef& p) const {
    int i = static_cast<int>(std::lround(wrap_periodic(p[0], mesh.hi[0] - mesh.lo[0]) / dx)) % nx;
    int j = static_cast<int>(std::lround(wrap_periodic(p[1], mesh.hi[1] - mesh.lo[1]) / dy)) % ny;
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * j;
  }

  // One explicit conservative step of the forward (density) equation,
  //   d rho = 1/2 sum_i (s_i^2 rho_ii) - div(b rho).
  void step(const Vec& v, Vec& out, double dt) const {
    double rx = dt * 0.5 / (dx * dx);
    double ry = dt * 0.5 / (dy * dy);
    double ax = dt * 0.5 / dx;
    double ay = dt * 0.5 / dy;
    const double* pv = v.data();
    double* po = out.data();
    const double* pcx = cxx.data();
    const double* pcy = cyy.data();
    const double* pb1 = b1.data();
    const double* pb2 = b2.data();
    for (int j = 0; j < ny; ++j) {
      int jp = j + 1 == ny ? 0 : j + 1;
      int jm = j == 0 ? ny - 1 : j - 1;
      std::size_t row = static_cast<std::size_t>(nx) * j;
      std::size_t rowp = static_cast<std::size_t>(nx) * jp;
      std::size_t rowm = static_cast<std::size_t>(nx) * jm;
      for (int i = 0; i < nx; ++i) {
        int ip = i + 1 == nx ? 0 : i + 1;
        int im = i == 0 ? nx - 1 : i - 1;
        std::size_t idx = row + i;
        double lap = rx * pcx[idx] * (pv[row + ip] - 2.0 * pv[idx] + pv[row + im]) +
                     ry * pcy[idx] * (pv[rowp + i] - 2.0 * pv[idx] + pv[rowm + i]);
        double adv = 0.0;
        if (has_drift) {
          adv = ax * (pb1[row + ip] * pv[row + ip] - pb1[row + im] * pv[row + im]) +
                ay * (pb2[rowp + i] * pv[rowp + i] - pb2[rowm + i] * pv[rowm + i]);
        }
        po[idx] = pv[idx] + lap - adv;
      }
    }
  }

  void advance(Vec& v, double t0, double t1) const {
    if (t1 <= t0) return;
    int n_steps = static_cast<int>(std::ceil((t1 - t0) / dt_max));
    double dt = (t1 - t0) / n_steps;
    Vec tmp(v.size());
    for (int s = 0; s < n_steps; ++s) {
      step(v, tmp, dt);
      v.swap(tmp);
    }
  }
};

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("kernel estimate needs at least one time");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] <= 0.0) throw std::invalid_argument("kernel times must be positive");
    if (i > 0 && times[i] <= times[i - 1])
      throw std::invalid_argument("kernel times must be increasing");
  }
}

bool system_is_symmetric(const VectorFieldSystem& sys) {
  for (const Vec& p : sample_points(sys.space, 8, 0xabcd)) {
    if (sys.drift.eval(p).norm() > 1e-14) return false;
    for (int i = 1; i <= sys.diffusion_count(); ++i)
      if (std::abs(divergence(sys, i, p)) > 1e-10) return false;
  }
  return true;
}

}  // namespace

KernelEstimate solve_heat_grid(const VectorFieldSystem& sys, const VecRef& x0,
                               const std::vector<double>& times, const GridOptions& opts) {
  check_times(times);
  GridEngine engine(sys, opts);
  if (times.front() < 4.0 * engine.dt_max) {
    std::ostringstream os;
    os << "solve_heat_grid: first output time " << times.front()
       << " is below 4*dt = " << 4.0 * engine.dt_max << "; refine the mesh or start later";
    throw std::invalid_argument(os.str());
  }

  KernelEstimate k;
  k.method = KernelMethod::GridPDE;
  k.side = KernelSide::Forward;
  k.symmetric = system_is_symmetric(sys);
  k.source = sys.space.wrap(x0);
  k.model = sys.name;
  k.mass_tol = opts.mass_tol;

  Vec v = Vec::Zero(engine.mesh.node_count());
  v[static_cast<Eigen::Index>(engine.nearest_node(k.source))] = 1.0 / engine.mesh.cell_volume();
  double t = 0.0;
  double cell = engine.mesh.cell_volume();
  for (double tk : times) {
    engine.advance(v, t, tk);
    t = tk;
    TimeSlice s;
    s.t = tk;
    s.mesh = engine.mesh;
    s.values = v;
    s.mass = v.sum() * cell;
    if (v.minCoeff() < -opts.mass_tol)
      throw std::runtime_error("solve_heat_grid: negative values beyond tolerance (instability)");
    if (std::abs(s.mass - 1.0) > opts.mass_tol)
      throw std::runtime_error("solve_heat_grid: mass conservation violated");
    k.slices.push_back(std::move(s));
  }
  return k;
}

Vec evolve_heat_grid(const VectorFieldSystem& sys, const MeshSpec& mesh, const Vec& init,
                     double t0, double t1, const GridOptions& opts) {
  GridOptions local = opts;
  local.nodes_per_axis = mesh.n[0];
  GridEngine engine(sys, local);
  if (mesh.n[1] != mesh.n[0])
    throw std::invalid_argument("evolve_heat_grid: expects a square mesh");
  Vec v = init;
  engine.advance(v, t0, t1);
  return v;
}

// ---------------------------------------------------------------------------
// Monte Carlo KDE
// ---------------------------------------------------------------------------

namespace {

// Circular standard deviation on a coordinate of period P (used only to set
// torus bandwidths; saturates at the uniform-distribution value).
double circular_sd(const Eigen::Ref<const Eigen::VectorXd>& xs, double period) {
  double c = 0.0, s = 0.0;
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    double a = 2.0 * kPi * xs[i] / period;
    c += std::cos(a);
    s += std::sin(a);
  }
  double r = std::sqrt(c * c + s * s) / static_cast<double>(xs.size());
  double uniform_sd = period * 0.2886751345948129;
  if (r < 1e-6) return uniform_sd;
  double sd = std::sqrt(std::max(0.0, -2.0 * std::log(r))) / (2.0 * kPi) * period;
  return std::min(sd, uniform_sd);
}

void gaussian_blur_axis(Vec& values, const Eigen::VectorXi& n, int axis, double sigma_nodes,
                        bool periodic) {
  int radius = static_cast<int>(std::ceil(4.0 * sigma_nodes));
  if (radius < 1) radius = 1;
  int len = n[axis];
  radius = std::min(radius, periodic ? len / 2 : len - 1);
  Vec taps(2 * radius + 1);
  for (int r = -radius; r <= radius; ++r)
    taps[r + radius] = std::exp(-0.5 * r * r / (sigma_nodes * sigma_nodes));
  taps /= taps.sum();

  int dim = static_cast<int>(n.size());
  std::size_t stride = 1;
  for (int d = 0; d < axis; ++d) stride *= static_cast<std::size_t>(n[d]);
  std::size_t outer = 1;
  for (int d = 0; d < dim; ++d)
    if (d != axis) outer *= static_cast<std::size_t>(n[d]);

  Vec line(len), out_line(len);
  for (std::size_t o = 0; o < outer; ++o) {
    // decompose o into the non-axis indices to find the line base offset
    std::size_t rem = o, base = 0, s = 1;
    for (int d = 0; d < dim; ++d) {
      if (d == axis) {
        s *= static_cast<std::size_t>(n[d]);
        continue;
      }
      std::size_t id = rem % static_cast<std::size_t>(n[d]);
      rem /= static_cast<std::size_t>(n[d]);
      base += id * s;
      s *= static_cast<std::size_t>(n[d]);
    }
    for (int i = 0; i < len; ++i) line[i] = values[static_cast<Eigen::Index>(base + stride * i)];
    for (int i = 0; i < len; ++i) {
      double acc = 0.0;
      for (int r = -radius; r <= radius; ++r) {
        int j = i + r;
        if (periodic) {
          j %= len;
          if (j < 0) j += len;
          acc += taps[r + radius] * line[j];
        } else if (j >= 0 && j < len) {
          acc += taps[r + radius] * line[j];
        }
      }
      out_line[i] = acc;
    }
    for (int i = 0; i < len; ++i) values[static_cast<Eigen::Index>(base + stride * i)] = out_line[i];
  }
}

void cic_deposit(Vec& values, const MeshSpec& mesh, const VecRef& p, double weight) {
  int dim = mesh.dim();
  int base[kMaxDim], next[kMaxDim];
  double frac[kMaxDim];
  for (int d = 0; d < dim; ++d) {
    double dx = node_spacing_of(mesh, d);
    double u = (p[d] - mesh.lo[d]) / dx;
    if (mesh.periodic) {
      double nd = static_cast<double>(mesh.n[d]);
      u -= nd * std::floor(u / nd);
      int i = std::min(static_cast<int>(u), mesh.n[d] - 1);
      base[d] = i;
      next[d] = (i + 1) % mesh.n[d];
      frac[d] = u - i;
    } else {
      u = std::clamp(u, 0.0, static_cast<double>(mesh.n[d] - 1));
      int i = std::min(static_cast<int>(u), mesh.n[d] - 2);
      base[d] = i;
      next[d] = i + 1;
      frac[d] = u - i;
    }
  }
  int corners = 1 << dim;
  for (int c = 0; c < corners; ++c) {
    double w = weight;
    std::size_t idx = 0, stride = 1;
    for (int d = 0; d < dim; ++d) {
      bool hi = (c >> d) & 1;
      w *= hi ? frac[d] : 1.0 - frac[d];
      idx += stride * static_cast<std::size_t>(hi ? next[d] : base[d]);
      stride *= static_cast<std::size_t>(mesh.n[d]);
    }
    values[static_cast<Eigen::Index>(idx)] += w;
  }
}

// Product-Gaussian kernel weight between query and sample, wrapped on
// periodic axes; used for cloud-based standard errors.
double product_kernel(const VecRef& q, const VecRef& s, const Vec& h, const MeshSpec& mesh) {
  double w = 1.0;
  for (int d = 0; d < q.size(); ++d) {
    if (mesh.periodic) {
      double p = mesh.hi[d] - mesh.lo[d];
      double diff = wrapped_diff(q[d], s[d], p);
      double g = std::exp(-0.5 * diff * diff / (h[d] * h[d])) +
                 std::exp(-0.5 * (diff - p) * (diff - p) / (h[d] * h[d])) +
                 std::exp(-0.5 * (diff + p) * (diff + p) / (h[d] * h[d]));
      w *= g / (h[d] * std::sqrt(2.0 * kPi));
      continue;
    }
    double diff = q[d] - s[d];
    w *= std::exp(-0.5 * diff * diff / (h[d] * h[d])) / (h[d] * std::sqrt(2.0 * kPi));
  }
  return w;
}

}  // namespace

KernelEstimate mc_kde_kernel(const VectorFieldSystem& sys, const VecRef& x0,
                             const std::vector<double>& times, int n_paths,
                             const KdeOptions& opts, std::uint64_t seed) {
  check_times(times);
  if (n_paths < 1000) throw std::invalid_argument("mc_kde_kernel: need n_paths >= 1000");
  int dim = sys.dim();
  Vec start = sys.space.wrap(x0);

  // One simulation pass to the horizon, snapshotting every stored time.
  std::vector<Mat> clouds(times.size());
  for (auto& c : clouds) c.resize(n_paths, dim);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    RandomStream rng(seed, p);
    HeunStepper stepper(sys);
    Vec y = start;
    Vec dw(sys.diffusion_count());
    double t = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      double target = times[k];
      int n_steps = static_cast<int>(std::ceil((target - t) / opts.dt));
      double dt = (target - t) / n_steps;
      double sd = std::sqrt(dt);
      for (int s = 0; s < n_steps; ++s) {
        for (int i = 0; i < dw.size(); ++i) dw[i] = sd * rng.next_normal();
        stepper.step(y, t + s * dt, dt, dw);
        if (!y.allFinite()) throw std::runtime_error("mc_kde_kernel: non-finite state");
      }
      t = target;
      clouds[k].row(static_cast<Eigen::Index>(p)) = y;
    }
  });

  KernelEstimate k;
  k.method = KernelMethod::MonteCarloKDE;
  k.side = KernelSide::Forward;
  k.symmetric = system_is_symmetric(sys);
  k.source = start;
  k.model = sys.name;
  k.seed = seed;
  k.mass_tol = opts.mass_tol;

  double nexp = std::pow(static_cast<double>(n_paths), -1.0 / (dim + 4));
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    Mat& cloud = clouds[ti];
    TimeSlice s;
    s.t = times[ti];
    s.bandwidth = Vec(dim);
    double floor_h = 1e-4 * (1.0 + start.norm());
    for (int d = 0; d < dim; ++d) {
      double sd;
      if (sys.space.periods.size() > d && sys.space.periods[d] > 0.0) {
        sd = circular_sd(cloud.col(d), sys.space.periods[d]);
      } else {
        double mean = cloud.col(d).mean();
        sd = std::sqrt((cloud.col(d).array() - mean).square().sum() / (n_paths - 1));
      }
      double h = opts.bandwidth_scale * sd * nexp;
      if (h < floor_h) {
        h = floor_h;
        s.bandwidth_floored = true;
      }
      s.bandwidth[d] = h;
    }

    // Lattice representation: CIC binning + separable Gaussian smoothing.
    MeshSpec mesh;
    mesh.lo = Vec(dim);
    mesh.hi = Vec(dim);
    mesh.n = Eigen::VectorXi(dim);
    mesh.periodic = sys.space.periods.size() > 0 && sys.space.periods.maxCoeff() > 0.0;
    int cap = dim == 2 ? 128 : 56;
    for (int d = 0; d < dim; ++d) {
      if (mesh.periodic) {
        mesh.lo[d] = 0.0;
        mesh.hi[d] = sys.space.periods[d];
        mesh.n[d] = opts.lattice_nodes > 0 ? opts.lattice_nodes : 96;
      } else {
        double margin = 4.0 * s.bandwidth[d];
        mesh.lo[d] = cloud.col(d).minCoeff() - margin;
        mesh.hi[d] = cloud.col(d).maxCoeff() + margin;
        int nd = opts.lattice_nodes > 0
                     ? opts.lattice_nodes
                     : static_cast<int>(std::ceil((mesh.hi[d] - mesh.lo[d]) / (0.5 * s.bandwidth[d])));
        mesh.n[d] = std::clamp(nd, 16, cap);
      }
    }
    s.mesh = mesh;
    s.values = Vec::Zero(mesh.node_count());
    for (int p = 0; p < n_paths; ++p) cic_deposit(s.values, mesh, cloud.row(p), 1.0);
    s.values /= static_cast<double>(n_paths) * mesh.cell_volume();
    for (int d = 0; d < dim; ++d)
      gaussian_blur_axis(s.values, mesh.n, d, s.bandwidth[d] / mesh.node_spacing(d), mesh.periodic);
    s.mass = s.values.sum() * mesh.cell_volume();
    s.cloud_size = n_paths;
    if (opts.store_cloud) s.cloud = std::move(cloud);
    k.slices.push_back(std::move(s));
  }
  return k;
}

KernelEstimate pinning_kernel(const VectorFieldSystem& sys, const VecRef& z0,
                              const std::vector<double>& times, const GridOptions& grid_opts,
                              const KdeOptions& kde_opts, int kde_paths, std::uint64_t seed) {
  VectorFieldSystem adj = adjoint_system(sys);
  KernelEstimate k = sys.space.kind == ModelKind::Torus2
                         ? solve_heat_grid(adj, z0, times, grid_opts)
                         : mc_kde_kernel(adj, z0, times, kde_paths, kde_opts, seed);
  k.side = KernelSide::Pinned;
  k.symmetric = system_is_symmetric(sys);
  k.model = sys.name;
  return k;
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

double KernelEstimate::value_on_slice(std::size_t slice_index, const VecRef& point) const {
  const TimeSlice& s = slices.at(slice_index);
  return interp_mesh(s.mesh, s.values, point);
}

std::size_t KernelEstimate::nearest_slice(double t) const {
  std::size_t best = 0;
  double bd = std::abs(slices[0].t - t);
  for (std::size_t i = 1; i < slices.size(); ++i) {
    double d = std::abs(slices[i].t - t);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

namespace {

std::pair<std::size_t, std::size_t> bracketing_slices(const KernelEstimate& k, double t) {
  if (t < k.t_min() - 1e-12 || t > k.t_max() + 1e-12)
    throw std::out_of_range("kernel query outside stored time range");
  std::size_t hi = 0;
  while (hi + 1 < k.slices.size() && k.slices[hi].t < t) ++hi;
  std::size_t lo = hi > 0 && k.slices[hi].t >= t ? hi - 1 : hi;
  return {lo, hi};
}

}  // namespace

double KernelEstimate::value(double t, const VecRef& point) const {
  auto [lo, hi] = bracketing_slices(*this, t);
  double v_lo = value_on_slice(lo, point);
  if (lo == hi) return v_lo;
  double v_hi = value_on_slice(hi, point);
  double w = (t - slices[lo].t) / (slices[hi].t - slices[lo].t);
  if (v_lo > 0.0 && v_hi > 0.0)
    return std::exp((1.0 - w) * std::log(v_lo) + w * std::log(v_hi));
  return (1.0 - w) * v_lo + w * v_hi;
}

double KernelEstimate::standard_error(double t, const VecRef& point) const {
  if (method == KernelMethod::GridPDE) return 0.0;
  const TimeSlice& s = slices[nearest_slice(t)];
  double n = static_cast<double>(s.cloud_size);
  if (s.cloud.rows() > 0) {
    // sample standard error of the mean kernel contribution
    double sum = 0.0, sum2 = 0.0;
    for (Eigen::Index i = 0; i < s.cloud.rows(); ++i) {
      double w = product_kernel(point, s.cloud.row(i), s.bandwidth, s.mesh);
      sum += w;
      sum2 += w * w;
    }
    double mean = sum / n;
    double sample_var = (sum2 - n * mean * mean) / (n - 1.0);
    return std::sqrt(std::max(0.0, sample_var / n));
  }
  // analytic leading-order KDE variance when the cloud was dropped
  double q = value(t, point);
  double rk = 1.0;
  for (int d = 0; d < s.bandwidth.size(); ++d) rk *= 1.0 / (2.0 * std::sqrt(kPi) * s.bandwidth[d]);
  return std::sqrt(std::max(0.0, q * rk / n));
}

ValueWithError kernel_value(const KernelEstimate& k, double t, const VecRef& x, const VecRef& y) {
  auto matches = [&](const VecRef& a) {
    return (Vec(a) - k.source).norm() <= 1e-7 * (1.0 + k.source.norm());
  };
  const Vec xv = Vec(x), yv = Vec(y);
  Vec free_point;
  if (k.side == KernelSide::Forward && matches(xv)) {
    free_point = yv;
  } else if (k.side == KernelSide::Pinned && matches(yv)) {
    free_point = xv;
  } else if (k.symmetric && matches(yv)) {
    free_point = xv;
  } else if (k.symmetric && matches(xv)) {
    free_point = yv;
  } else {
    throw std::invalid_argument("kernel_value: neither argument matches the stored source point");
  }
  ValueWithError v;
  v.value = k.value(t, free_point);
  v.se = k.standard_error(t, free_point);
  return v;
}

HorizontalGradient log_horizontal_gradient(const KernelEstimate& k, const VectorFieldSystem& sys,
                                           double t, const VecRef& x, const VecRef& z0) {
  if (k.side != KernelSide::Pinned && !k.symmetric)
    throw std::invalid_argument("log_horizontal_gradient: needs a pinned (or symmetric) estimate");
  if ((Vec(z0) - k.source).norm() > 1e-7 * (1.0 + k.source.norm()))
    throw std::invalid_argument("log_horizontal_gradient: z0 does not match the stored source");

  auto [lo, hi] = bracketing_slices(k, t);
  double floor = kKernelFloorRel * std::max(slice_max(k.slices[lo]), slice_max(k.slices[hi]));

  HorizontalGradient g;
  g.directional = Vec::Zero(sys.diffusion_count());
  double v0 = k.value(t, x);
  if (!(v0 > floor)) return g;  // available stays false

  const MeshSpec& mesh = k.slices[lo].mesh;
  Vec f(sys.dim());
  for (int i = 0; i < sys.diffusion_count(); ++i) {
    sys.diffusion[i].eval_into(x, f);
    double fn = f.norm();
    if (fn < 1e-14) {
      g.directional[i] = 0.0;
      continue;
    }
    // one interpolation cell along the field direction
    double cell = 0.0;
    for (int d = 0; d < mesh.dim(); ++d) {
      double c = mesh.node_spacing(d) * f[d] / fn;
      cell += c * c;
    }
    double delta = 1.5 * std::sqrt(cell) / fn;
    double vp = k.value(t, Vec(x) + delta * f);
    double vm = k.value(t, Vec(x) - delta * f);
    if (!(vp > floor) || !(vm > floor)) return g;
    g.directional[i] = (std::log(vp) - std::log(vm)) / (2.0 * delta);
  }
  g.available = true;
  return g;
}

ValueWithError time_derivative(const KernelEstimate& k, double t, const VecRef& x, const VecRef& y) {
  if (k.slices.size() < 2)
    throw std::invalid_argument("time_derivative: need at least two stored times");
  std::size_t c = k.nearest_slice(t);
  ValueWithError out;
  std::size_t lo, hi;
  if (c == 0) {
    lo = 0;
    hi = 1;
    out.one_sided = true;
  } else if (c + 1 == k.slices.size()) {
    lo = k.slices.size() - 2;
    hi = k.slices.size() - 1;
    out.one_sided = true;
  } else {
    lo = c - 1;
    hi = c + 1;
  }
  ValueWithError vl = kernel_value(k, k.slices[lo].t, x, y);
  ValueWithError vh = kernel_value(k, k.slices[hi].t, x, y);
  double dt = k.slices[hi].t - k.slices[lo].t;
  out.value = (vh.value - vl.value) / dt;
  out.se = std::sqrt(vl.se * vl.se + vh.se * vh.se) / dt;
  return out;
}

ExponentFit on_diagonal_exponent(const KernelEstimate& k, const VecRef& x, double t_lo, double t_hi) {
  if ((Vec(x) - k.source).norm() > 1e-7 * (1.0 + k.source.norm()))
    throw std::invalid_argument("on_diagonal_exponent: x must be the stored source");
  std::vector<double> lt, lq;
  for (std::size_t i = 0; i < k.slices.size(); ++i) {
    double t = k.slices[i].t;
    if (t < t_lo || t > t_hi) continue;
    double q = k.value_on_slice(i, x);
    if (!(q > 0.0))
      throw std::runtime_error("on_diagonal_exponent: nonpositive kernel value in window");
    lt.push_back(std::log(t));
    lq.push_back(std::log(q));
  }
  if (lt.size() < 5)
    throw std::invalid_argument("on_diagonal_exponent: need at least 5 stored times in window");
  LineFit f = fit_line(lt, lq);
  ExponentFit e;
  e.q_hat = -2.0 * f.slope;
  e.se = 2.0 * f.slope_se;
  e.ci_lo = e.q_hat - 2.0 * e.se;
  e.ci_hi = e.q_hat + 2.0 * e.se;
  e.n_times = static_cast<int>(lt.size());
  return e;
}

BoundFitReport check_gaussian_bounds(const KernelEstimate& k,
                                     const std::function<double(const VecRef&)>& dist_from_source,
                                     const std::function<double(double)>& ball_volume_at_radius,
                                     const std::vector<Vec>& eval_points,
                                     const BoundFitOptions& opts) {
  std::vector<Vec> points = eval_points;
  points.push_back(k.source);  // d = 0 anchor keeps C1 <= C2
  BoundFitReport rep;
  rep.c3 = opts.c3;
  rep.c4 = opts.c4;
  rep.t_lo = 1e30;
  rep.t_hi = 0.0;

  double c1 = 1e300, c2 = 0.0;
  struct Entry {
    double q, env_lo, env_hi;
  };
  std::vector<Entry> entries;
  int excluded = 0, total = 0;
  for (std::size_t si = 0; si < k.slices.size(); ++si) {
    double t = k.slices[si].t;
    if (t < opts.t_lo || t > opts.t_hi) continue;
    rep.t_lo = std::min(rep.t_lo, t);
    rep.t_hi = std::max(rep.t_hi, t);
    double floor = kKernelFloorRel * slice_max(k.slices[si]);
    double vol = ball_volume_at_radius(std::sqrt(t));
    for (const Vec& y : points) {
      ++total;
      double q = k.value_on_slice(si, y);
      if (!(q > floor)) {
        ++excluded;
        continue;
      }
      double d = dist_from_source(y);
      double env_lo = std::exp(-opts.c3 * d * d / t) / vol;
      double env_hi = std::exp(-opts.c4 * d * d / t) / vol;
      c1 = std::min(c1, q / env_lo);
      c2 = std::max(c2, q / env_hi);
      entries.push_back({q, env_lo, env_hi});
    }
  }
  if (entries.empty()) throw std::runtime_error("check_gaussian_bounds: no usable points");
  rep.c1 = c1;
  rep.c2 = c2;
  rep.points_used = static_cast<int>(entries.size());
  rep.excluded_fraction = static_cast<double>(excluded) / std::max(1, total);

  int violations = 0;
  std::vector<double> residuals;
  residuals.reserve(entries.size());
  for (const auto& e : entries) {
    bool ok = c1 * e.env_lo <= e.q * (1.0 + 1e-12) && e.q <= c2 * e.env_hi * (1.0 + 1e-12);
    if (!ok) ++violations;
    residuals.push_back(std::log(c2 * e.env_hi) - std::log(e.q));
  }
  rep.violation_fraction = static_cast<double>(violations) / entries.size();
  rep.residual_quantiles = Vec(4);
  rep.residual_quantiles[0] = quantile(residuals, 0.25);
  rep.residual_quantiles[1] = quantile(residuals, 0.5);
  rep.residual_quantiles[2] = quantile(residuals, 0.75);
  rep.residual_quantiles[3] = quantile(residuals, 1.0);
  return rep;
}

}  // namespace hypobridge
