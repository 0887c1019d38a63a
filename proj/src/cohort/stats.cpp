#include "cohort/stats.hpp"

#include <cmath>

#include "cohort/csv.hpp"
#include "cohort/stats_math.hpp"
#include "common.hpp"

namespace lvo::cohort {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // sample variance (n-1 denominator)
    size_t n = 0;
};

Moments moments(std::span<const double> xs) {
    Moments m;
    m.n = xs.size();
    double sum = 0.0;
    for (double x : xs) sum += x;
    m.mean = sum / static_cast<double>(m.n);
    double ss = 0.0;
    for (double x : xs) {
        double d = x - m.mean;
        ss += d * d;
    }
    m.var = m.n > 1 ? ss / static_cast<double>(m.n - 1) : 0.0;
    return m;
}

}  // namespace

TTestResult two_sample_t(std::span<const double> a, std::span<const double> b, TVariant variant) {
    if (a.size() < 2 || b.size() < 2)
        throw ValidationError("two_sample_t: each sample needs at least 2 values");
    Moments ma = moments(a);
    Moments mb = moments(b);
    double na = static_cast<double>(ma.n), nb = static_cast<double>(mb.n);

    TTestResult r;
    if (ma.var == 0.0 && mb.var == 0.0) {
        r.degenerate = true;
        r.df = variant == TVariant::pooled ? na + nb - 2.0 : na + nb - 2.0;
        if (ma.mean == mb.mean) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = ma.mean > mb.mean ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }

    if (variant == TVariant::pooled) {
        double df = na + nb - 2.0;
        double sp2 = ((na - 1.0) * ma.var + (nb - 1.0) * mb.var) / df;
        double se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
        r.t = (ma.mean - mb.mean) / se;
        r.df = df;
    } else {
        double va = ma.var / na, vb = mb.var / nb;
        double se = std::sqrt(va + vb);
        r.t = (ma.mean - mb.mean) / se;
        r.df = (va + vb) * (va + vb) /
               (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    }
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

Chi2Result chi_square_2x2(double a, double b, double c, double d) {
    if (a < 0 || b < 0 || c < 0 || d < 0)
        throw ValidationError("chi_square_2x2: counts must be nonnegative");
    double r0 = a + b, r1 = c + d, c0 = a + c, c1 = b + d;
    if (r0 == 0 || r1 == 0 || c0 == 0 || c1 == 0)
        throw ValidationError("chi_square_2x2: zero margin, statistic undefined");
    double n = r0 + r1;
    // 2x2 closed form of the Pearson sum. Written this way the statistic is
    // bit-for-bit invariant under row and column swaps (products commute,
    // the cross term only flips sign inside a square).
    double cross = a * d - b * c;
    double chi2 = n * cross * cross / ((r0 * r1) * (c0 * c1));
    return {chi2, chi2_sf(chi2, 1.0)};
}

CohortStats cohort_stats(const Cohort& records) {
    CohortStats out;
    for (const auto& rec : records) (rec.lvo ? out.n_lvo : out.n_non)++;
    if (out.n_lvo == 0 || out.n_non == 0)
        throw ValidationError("cohort_stats: both classes must be present");

    for (const auto& col : kManifest) {
        FeatureStats fs;
        fs.name = std::string(col.name);
        fs.kind = col.kind;

        std::vector<double> vals[2];
        for (const auto& rec : records) {
            auto v = rec.feature(col.name);
            if (!v) continue;
            vals[rec.lvo ? 0 : 1].push_back(*v);
        }
        for (int cls = 0; cls < 2; ++cls)
            fs.count[cls] = static_cast<int>(vals[cls].size());

        if (col.kind == ColKind::continuous) {
            fs.test = 't';
            for (int cls = 0; cls < 2; ++cls) {
                if (!vals[cls].empty()) {
                    Moments m = moments(vals[cls]);
                    fs.mean[cls] = m.mean;
                    fs.sd[cls] = std::sqrt(m.var);
                }
            }
            if (vals[0].size() >= 2 && vals[1].size() >= 2) {
                auto r = two_sample_t(vals[0], vals[1], TVariant::pooled);
                fs.statistic = r.t;
                fs.p = r.p;
                fs.testable = true;
            }
        } else {
            fs.test = 'c';
            double pos[2] = {0, 0};
            for (int cls = 0; cls < 2; ++cls) {
                for (double v : vals[cls]) pos[cls] += (v != 0.0) ? 1.0 : 0.0;
                if (!vals[cls].empty())
                    fs.mean[cls] = pos[cls] / static_cast<double>(vals[cls].size());
            }
            double neg0 = fs.count[0] - pos[0], neg1 = fs.count[1] - pos[1];
            bool margins_ok = (pos[0] + pos[1] > 0) && (neg0 + neg1 > 0) &&
                              fs.count[0] > 0 && fs.count[1] > 0;
            if (margins_ok) {
                auto r = chi_square_2x2(pos[0], neg0, pos[1], neg1);
                fs.statistic = r.chi2;
                fs.p = r.p;
                fs.testable = true;
            }
        }
        out.features.push_back(std::move(fs));
    }
    return out;
}

std::string cohort_stats_to_csv(const CohortStats& stats) {
    std::string out =
        "feature,kind,lvo_mean,lvo_sd,lvo_n,non_mean,non_sd,non_n,test,statistic,p,testable\n";
    for (const auto& f : stats.features) {
        out += f.name;
        out += f.kind == ColKind::binary ? ",binary," : ",continuous,";
        out += format_double(f.mean[0]) + ',' + format_double(f.sd[0]) + ',' +
               std::to_string(f.count[0]) + ',';
        out += format_double(f.mean[1]) + ',' + format_double(f.sd[1]) + ',' +
               std::to_string(f.count[1]) + ',';
        out += f.test == 't' ? "t," : "chi2,";
        out += format_double(f.statistic) + ',' + format_double(f.p) + ',';
        out += f.testable ? "1\n" : "0\n";
    }
    return out;
}

}  // namespace lvo::cohort
