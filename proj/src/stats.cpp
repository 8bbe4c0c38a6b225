#include "metatutor/stats.hpp"

#include <cmath>
#include <limits>

#include "metatutor/errors.hpp"

namespace metatutor::stats {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
const double kFpMin = std::numeric_limits<double>::min() / kEps;

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= kEps) break;
    }
    return h;
}

// Series expansion of the lower incomplete gamma, valid for x < s + 1.
double gamma_series(double s, double x) {
    double ap = s;
    double sum = 1.0 / s;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Continued fraction for the upper incomplete gamma, valid for x >= s + 1.
double gamma_cf(double s, double x) {
    double b = x + 1.0 - s;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -double(i) * (double(i) - s);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= kEps) break;
    }
    return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

double clamp01(double p) { return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p); }

}  // namespace

double reg_inc_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw ValidationError("reg_inc_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0))
        throw ValidationError("reg_inc_beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return clamp01(bt * beta_cf(a, b, x) / a);
    return clamp01(1.0 - bt * beta_cf(b, a, 1.0 - x) / b);
}

double reg_inc_gamma_lower(double s, double x) {
    if (!(s > 0.0)) throw ValidationError("reg_inc_gamma: s must be positive");
    if (!(x >= 0.0)) throw ValidationError("reg_inc_gamma: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (x < s + 1.0) return clamp01(gamma_series(s, x));
    return clamp01(1.0 - gamma_cf(s, x));
}

double reg_inc_gamma_upper(double s, double x) {
    if (!(s > 0.0)) throw ValidationError("reg_inc_gamma: s must be positive");
    if (!(x >= 0.0)) throw ValidationError("reg_inc_gamma: x must be >= 0");
    if (x == 0.0) return 1.0;
    if (x < s + 1.0) return clamp01(1.0 - gamma_series(s, x));
    return clamp01(gamma_cf(s, x));
}

double student_t_two_tailed_p(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("t distribution needs df > 0");
    if (std::isinf(t)) return 0.0;
    return clamp01(reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)));
}

double f_survival_p(double F, int df1, int df2) {
    if (df1 < 1 || df2 < 1) throw ValidationError("F distribution needs df >= 1");
    if (std::isinf(F)) return 0.0;
    if (F <= 0.0) return 1.0;
    return clamp01(reg_inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * F)));
}

double chi_square_survival_p(double chi2, int df) {
    if (df < 1) throw ValidationError("chi-square needs df >= 1");
    if (chi2 <= 0.0) return 1.0;
    return reg_inc_gamma_upper(df / 2.0, chi2 / 2.0);
}

double mean_of(const SampleSet& s) {
    if (s.values.empty())
        throw ValidationError("mean of empty sample '" + s.label + "'");
    double sum = 0.0;
    for (double v : s.values) sum += v;
    return sum / double(s.values.size());
}

Summary describe(const SampleSet& s) {
    if (s.values.size() < 2)
        throw ValidationError("sd requires n >= 2 (sample '" + s.label + "')");
    const double m = mean_of(s);
    double ss = 0.0;
    for (double v : s.values) ss += (v - m) * (v - m);
    return {m, std::sqrt(ss / double(s.values.size() - 1)), s.values.size()};
}

double nlg(double pre, double post, double max_score) {
    if (!(max_score > 0.0)) throw ValidationError("nlg: max score must be positive");
    if (!(pre >= 0.0 && pre <= max_score) || !(post >= 0.0 && post <= max_score))
        throw ValidationError("nlg: scores must lie in [0, max]");
    if (pre == max_score)
        throw ValidationError("nlg: undefined when pre-test equals the maximum score");
    return (post - pre) / std::sqrt(max_score - pre);
}

TTestResult t_test_ind(const Summary& a, const Summary& b) {
    if (a.n < 2 || b.n < 2) throw ValidationError("t-test requires n >= 2 per group");
    if (a.sd < 0.0 || b.sd < 0.0) throw ValidationError("t-test: negative sd");
    TTestResult r;
    r.df = double(a.n + b.n - 2);
    const double pooled_var =
        ((double(a.n) - 1.0) * a.sd * a.sd + (double(b.n) - 1.0) * b.sd * b.sd) / r.df;
    const double diff = a.mean - b.mean;
    if (pooled_var == 0.0) {
        if (diff == 0.0) return {0.0, r.df, 1.0, 0.0, false};
        const double inf = std::numeric_limits<double>::infinity();
        return {diff > 0 ? inf : -inf, r.df, 0.0, diff > 0 ? inf : -inf, true};
    }
    const double sp = std::sqrt(pooled_var);
    r.t = diff / (sp * std::sqrt(1.0 / double(a.n) + 1.0 / double(b.n)));
    r.d = diff / sp;
    r.p = student_t_two_tailed_p(r.t, r.df);
    return r;
}

TTestResult t_test_ind(const SampleSet& a, const SampleSet& b) {
    return t_test_ind(describe(a), describe(b));
}

AnovaResult one_way_anova(const std::vector<SampleSet>& groups) {
    if (groups.size() < 2) throw ValidationError("ANOVA requires at least 2 groups");
    std::size_t total_n = 0;
    for (const SampleSet& g : groups) {
        if (g.values.size() < 2)
            throw ValidationError("ANOVA: every group needs n >= 2 (group '" + g.label +
                                  "')");
        total_n += g.values.size();
    }

    double grand_sum = 0.0;
    for (const SampleSet& g : groups)
        for (double v : g.values) grand_sum += v;
    const double grand_mean = grand_sum / double(total_n);

    double ss_between = 0.0, ss_within = 0.0;
    for (const SampleSet& g : groups) {
        const double m = mean_of(g);
        ss_between += double(g.values.size()) * (m - grand_mean) * (m - grand_mean);
        for (double v : g.values) ss_within += (v - m) * (v - m);
    }

    AnovaResult r;
    r.df_between = int(groups.size()) - 1;
    r.df_within = int(total_n) - int(groups.size());
    if (ss_within == 0.0) {
        if (ss_between == 0.0) {
            // all groups constant and equal: F is 0/0, reported as 0 with p = 1
            r.F = 0.0;
            r.p = 1.0;
            return r;
        }
        r.F = std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.zero_within_variance = true;
        return r;
    }
    const double ms_between = ss_between / r.df_between;
    const double ms_within = ss_within / r.df_within;
    r.F = ms_between / ms_within;
    r.p = f_survival_p(r.F, r.df_between, r.df_within);
    return r;
}

ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& counts) {
    const std::size_t rows = counts.size();
    if (rows < 2) throw ValidationError("chi-square table needs at least 2 rows");
    const std::size_t cols = counts.front().size();
    if (cols < 2) throw ValidationError("chi-square table needs at least 2 columns");
    for (const auto& row : counts) {
        if (row.size() != cols) throw ValidationError("chi-square table is ragged");
        for (double v : row)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ValidationError("chi-square counts must be finite and >= 0");
    }

    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            row_sum[i] += counts[i][j];
            col_sum[j] += counts[i][j];
            total += counts[i][j];
        }
    for (double s : row_sum)
        if (s == 0.0) throw ValidationError("chi-square: zero row marginal");
    for (double s : col_sum)
        if (s == 0.0) throw ValidationError("chi-square: zero column marginal");

    ChiSquareResult r;
    r.df = int(rows - 1) * int(cols - 1);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const double expected = row_sum[i] * col_sum[j] / total;
            const double diff = counts[i][j] - expected;
            r.chi2 += diff * diff / expected;
        }
    r.p = chi_square_survival_p(r.chi2, r.df);
    return r;
}

double bonferroni(double alpha, int m) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ValidationError("bonferroni: alpha must be in (0,1]");
    if (m < 1) throw ValidationError("bonferroni: m must be >= 1");
    return alpha / double(m);
}

}  // namespace metatutor::stats
