#pragma once

namespace lvo::cohort {

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
double incbeta(double a, double b, double x);

// Regularized incomplete gamma P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Two-sided survival p-value of Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df);

// Upper tail of the chi-square distribution.
double chi2_sf(double x, double df);

}  // namespace lvo::cohort
