#pragma once

// Scalar special functions used by the likelihood kernels and test statistics.

namespace countfx::special {

double digamma(double x);
double trigamma(double x);

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
double gamma_q(double a, double x);

/// Upper tail P(χ²_dof > x).
double chi2_sf(double x, double dof);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

/// log(exp(a) + exp(b)).
double logaddexp(double a, double b);

/// log(1 - exp(x)) for x < 0.
double log1mexp(double x);

}  // namespace countfx::special
