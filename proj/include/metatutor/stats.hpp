#pragma once
// Descriptive and inferential statistics used by the experiment reports:
// normalized learning gain, pooled t-test with Cohen's d, one-way ANOVA,
// chi-square independence, Bonferroni adjustment, and the regularized
// incomplete beta/gamma kernels behind the p-values.

#include <string>
#include <vector>

#include "metatutor/errors.hpp"

namespace metatutor::stats {

struct SampleSet {
    std::vector<double> values;
    std::string label;
};

struct Summary {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double d = 0.0;      // Cohen's d, pooled SD
    bool infinite_t = false;  // zero pooled variance with unequal means
};

struct AnovaResult {
    double F = 0.0;
    int df_between = 0;
    int df_within = 0;
    double p = 1.0;
    bool zero_within_variance = false;  // p forced to 0 when means differ
};

struct ChiSquareResult {
    double chi2 = 0.0;
    int df = 1;
    double p = 1.0;
};

double mean_of(const SampleSet& s);            // n >= 1
Summary describe(const SampleSet& s);          // n >= 2 (sample sd, n-1 denominator)

// Normalized learning gain (post - pre) / sqrt(max - pre).
// pre == max is rejected; negative gains are allowed.
double nlg(double pre, double post, double max_score);

TTestResult t_test_ind(const Summary& a, const Summary& b);
TTestResult t_test_ind(const SampleSet& a, const SampleSet& b);

AnovaResult one_way_anova(const std::vector<SampleSet>& groups);

// counts is an r x c table, r, c >= 2, all entries >= 0, no zero marginal.
ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& counts);

double bonferroni(double alpha, int m);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double reg_inc_beta(double a, double b, double x);
// Regularized upper incomplete gamma Q(s, x); Q(1, x) = exp(-x).
double reg_inc_gamma_upper(double s, double x);
double reg_inc_gamma_lower(double s, double x);

// Two-tailed survival helpers built on the kernels above.
double student_t_two_tailed_p(double t, double df);
double f_survival_p(double F, int df1, int df2);
double chi_square_survival_p(double chi2, int df);

}  // namespace metatutor::stats
