//==============================================================================
// grid.hpp
// Uniform periodic grid on [-L, L), Fourier spectral calculus, inner products,
// weighted norms and the conserved functionals of the fractional NLS
//   i u_t - |D|^b u + |u|^{2b} u = 0.
// All linear operators (|D|^s, d/dy, the scaling generator Lf = f/2 + y f')
// are diagonal in Fourier space; Spectral owns the FFTW plans for one grid
// size and is safe to share read-only across threads.
//==============================================================================
#pragma once

#include <complex>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fnls {

using Vec  = Eigen::ArrayXd;
using CVec = Eigen::ArrayXcd;
using Cplx = std::complex<double>;

struct Grid {
    double L = 0;    // half width: nodes live in [-L, L)
    int    N = 0;    // number of nodes, power of two
    double h = 0;    // spacing 2L/N
    Vec    y;        // nodes y_j = -L + j h
    Vec    k;        // wavenumbers pi*m/L in FFT storage order
};
using GridPtr = std::shared_ptr<const Grid>;

// Throws std::invalid_argument unless N is a power of two >= 16 and L > 0.
GridPtr make_grid(double L, int N);

enum class Parity { Even, Odd, None };

// Boundary type for fields exchanged between modules and serialized to disk.
struct Field {
    GridPtr grid;
    CVec    v;
    Parity  tag = Parity::None;
};

// Symmetry defect: even -> ||f - f(-y)||/||f||, odd -> ||f + f(-y)||/||f||.
double parity_residual(const Vec& f, Parity p);
double parity_residual(const CVec& f, Parity p);
Vec reverse(const Vec& f);          // f(-y) on the periodic node set
CVec reverse(const CVec& f);
Vec even_part(const Vec& f);
Vec odd_part(const Vec& f);

//------------------------------------------------------------------------------
// Spectral: FFT workspace bound to one grid. Plans are created once (guarded,
// the FFTW planner is not thread-safe); execution on caller buffers is pure.
//------------------------------------------------------------------------------
class Spectral {
  public:
    explicit Spectral(GridPtr g);
    ~Spectral();
    Spectral(const Spectral&) = delete;
    Spectral& operator=(const Spectral&) = delete;

    const Grid& grid() const { return *g_; }
    GridPtr grid_ptr() const { return g_; }

    void fft(CVec& a) const;    // in place, unnormalized forward
    void ifft(CVec& a) const;   // in place, scaled by 1/N

    // d/dy with the unpaired Nyquist mode zeroed (odd-order multiplier).
    CVec deriv(const CVec& f) const;
    Vec  deriv(const Vec& f) const;

    // |D|^s, multiplier |k|^s. Real input yields real output; the imaginary
    // residue must stay below 1e-12 relative (asserted) and is discarded.
    CVec frac(const CVec& f, double s) const;
    Vec  frac(const Vec& f, double s) const;

    // L f = f/2 + y f'. Warns (stderr) when |f(+-L)| > 1e-8 * max|f|.
    CVec lambda(const CVec& f) const;
    Vec  lambda(const Vec& f) const;

    // (|D|^beta + shift)^{-1}, shift > 0.
    CVec resolvent_frac(const CVec& f, double beta, double shift) const;
    Vec  resolvent_frac(const Vec& f, double beta, double shift) const;

    // Trigonometric interpolation onto a grid refined by an integer factor.
    CVec upsample(const CVec& f, int factor) const;
    Vec  upsample(const Vec& f, int factor) const;

    // Zero Fourier coefficients below eps * max|f_hat|; removes the roundoff
    // tail that high-order multipliers would otherwise amplify.
    Vec clip_spectrum(const Vec& f, double eps) const;

    double spectral_tail_fraction(const CVec& f) const; // top-octave vs peak

  private:
    GridPtr g_;
    struct Plans;
    std::unique_ptr<Plans> plans_;
};

//------------------------------------------------------------------------------
// Quadrature (rectangle rule, exact for trigonometric polynomials) and the
// conserved functionals.
//------------------------------------------------------------------------------
double inner(const Grid& g, const Vec& f, const Vec& q);
Cplx   inner(const Grid& g, const CVec& f, const CVec& q); // int conj(f) q
double norm_l2(const Grid& g, const Vec& f);
double norm_l2(const Grid& g, const CVec& f);
double norm_sup(const Vec& f);
double norm_sup(const CVec& f);

struct WeightedNorms {
    double l2;     // int |f|^2
    double hdot;   // int ||D|^{b/2} f|^2
    double expw;   // int |f|^2 e^{-|y|}
    double polyw;  // int |f|^2 (1+|y|)^{-b}
};
WeightedNorms weighted_norms(const Spectral& sp, const CVec& f, double beta);
WeightedNorms weighted_norms(const Spectral& sp, const Vec& f, double beta);

struct Functionals {
    double mass;      // int |u|^2
    double energy;    // 1/2 int ||D|^{b/2}u|^2 - 1/(2b+2) int |u|^{2b+2}
    double momentum;  // Im int u_x conj(u)
};
Functionals functionals(const Spectral& sp, const CVec& u, double beta);

//------------------------------------------------------------------------------
// Serialization: CSV (y, Re f, Im f) and a raw little-endian binary dump
// (header: L as f64, N as i64, complex flag as i64; then 64-bit samples).
//------------------------------------------------------------------------------
void write_csv(const std::string& path, const Field& f);
void write_dump(const std::string& path, const Field& f);
Field read_dump(const std::string& path);

} // namespace fnls
