#pragma once

namespace autods::stats {

/// Regularized lower incomplete gamma P(a, x). Series for x < a + 1,
/// Lentz continued fraction for Q otherwise.
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), without cancellation.
double gamma_q(double a, double x);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double beta_inc(double a, double b, double x);
/// Same, with y = 1 - x supplied by the caller to avoid cancellation near 1.
double beta_inc(double a, double b, double x, double y);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);
double normal_sf(double x, double mean = 0.0, double sd = 1.0);
/// Wichura AS241 (PPND16), accurate to about 1e-16.
double normal_quantile(double p);

double student_t_cdf(double t, double dof);
double student_t_sf(double t, double dof);
double student_t_quantile(double p, double dof);

double chi_square_cdf(double x, double dof);
double chi_square_sf(double x, double dof);
double chi_square_quantile(double p, double dof);

double fisher_f_cdf(double x, double dof1, double dof2);
double fisher_f_sf(double x, double dof1, double dof2);

enum class Distribution { normal, student_t, chi_square, fisher_f };

struct DistParams {
    double dof1 = 1.0;  // t, chi-square dof; numerator dof for F
    double dof2 = 1.0;  // denominator dof for F
    double location = 0.0;
    double scale = 1.0;
};

/// Throws a domain error for non-positive dof or scale.
double dist_cdf(Distribution dist, double x, const DistParams& params = {});

}  // namespace autods::stats
