//==============================================================================
// linops.hpp
// The linearized and virial operators at the ground state:
//   L+  = |D|^b + 1 - (2b+1) Q^{2b}
//   L-  = |D|^b + 1 - Q^{2b}
//   C1  = |D|^b + 2(2b+1) y Q' Q^{2b-1}
//   C2  = |D|^b + 2 y Q' Q^{2b-1}
//   Hb1 = |D|^b + (10/9) pot(C1) - (1/9) sech^2(10y/9)
//   Hb2 = |D|^b + (10/9) pot(C2) - (1/9) sech^2(10y/9)
// Matrix-free application (multiplier via FFT, potential pointwise), kernel-
// deflated solves, parity-sector dense matrices on reduced grids, and lowest
// eigenpairs with full-grid refinement.
//==============================================================================
#pragma once

#include <memory>
#include <vector>

#include "fnls/ground.hpp"
#include "fnls/grid.hpp"
#include "fnls/krylov.hpp"

namespace fnls {

enum class OpKind { Lplus, Lminus, Cal1, Cal2, Hbar1, Hbar2 };

class LinOp {
  public:
    LinOp(std::shared_ptr<const Spectral> sp, OpKind kind, double beta, double id_coeff, Vec V);

    static LinOp make(std::shared_ptr<const Spectral> sp, OpKind kind, const GroundState& gs);

    // Same operator with the potential subsampled onto a coarser power-of-two
    // grid over the same box (nodes of the coarse grid are a subset).
    LinOp restricted(std::shared_ptr<const Spectral> coarse) const;

    Vec apply(const Vec& f) const;
    ApplyFn apply_fn() const;
    ApplyFn precond_fn() const; // (|D|^b + 1)^{-1}

    double beta() const { return beta_; }
    OpKind kind() const { return kind_; }
    const Vec& potential() const { return V_; }
    double id_coeff() const { return id_; }
    const Spectral& spectral() const { return *sp_; }
    std::shared_ptr<const Spectral> spectral_ptr() const { return sp_; }

  private:
    std::shared_ptr<const Spectral> sp_;
    OpKind kind_;
    double beta_;
    double id_;
    Vec V_;
};

// Solve L g = rhs with g pinned orthogonal to the given kernel vectors.
// stats->rhs_kernel_fraction reports how much of rhs had to be projected out.
Vec solve_deflated(const LinOp& op, const Vec& rhs, const std::vector<Vec>& kernel, double tol,
                   int max_iter = 4000, SolveStats* stats = nullptr);

//------------------------------------------------------------------------------
// Parity sectors: orthonormal bases of even/odd grid functions (with respect
// to the quadrature inner product) for dense work on reduced grids.
//------------------------------------------------------------------------------
class ParityBasis {
  public:
    ParityBasis(GridPtr g, Parity p);
    int dim() const { return dim_; }
    Parity parity() const { return p_; }
    Vec to_grid(const Eigen::VectorXd& c) const;
    Eigen::VectorXd from_grid(const Vec& f) const;

  private:
    GridPtr g_;
    Parity p_;
    int dim_;
};

// Dense symmetric sector matrix of a grid operator: M_ij = <e_i, A e_j>.
Eigen::MatrixXd sector_matrix(const ParityBasis& basis, const ApplyFn& A);

// LAPACK symmetric eigensolvers (ascending eigenvalues).
struct SymEig {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};
SymEig sym_eig(const Eigen::MatrixXd& A);
SymEig sym_gen_eig(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B); // B SPD

//------------------------------------------------------------------------------
// Lowest eigenpairs of an operator restricted to a parity sector: dense solve
// on a reduced grid, trigonometric prolongation, inverse-iteration refinement
// on the full grid. resolution_ok is false when reduced and refined values
// disagree by more than 1e-3.
//------------------------------------------------------------------------------
struct EigenPairs {
    std::vector<double> values;
    std::vector<Vec> vectors;       // on the operator's full grid
    std::vector<double> reduced_values;
    bool resolution_ok = true;
};
EigenPairs lowest_eigenpairs(const LinOp& op, Parity parity, int count, int n_reduced = 2048);

// Tail decay of the kernel of (|D|^b + 1)^{-1}: log-log slope over the
// window [L/8, 3L/8] (expected near -(1+b) for b < 2).
double resolvent_kernel_decay(const Spectral& sp, double beta);

} // namespace fnls
