#include "demand/errors.hpp"
#include "demand/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace demand::kernels {

namespace {

// -1: automatic, otherwise an Isa value.
std::atomic<int> g_forced{-1};

bool env_forces_scalar() noexcept {
    const char *v = std::getenv("DEMANDSYS_FORCE_SCALAR");
    return v != nullptr && *v != '\0' && *v != '0';
}

} // namespace

bool avx2_supported() noexcept {
#if defined(__x86_64__) || defined(__i386__)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported;
#else
    return false;
#endif
}

Isa active_isa() noexcept {
    const int forced = g_forced.load(std::memory_order_relaxed);
    if (forced >= 0) {
        const auto isa = static_cast<Isa>(forced);
        return (isa == Isa::Avx2 && !avx2_supported()) ? Isa::Scalar : isa;
    }
    static const bool scalar_env = env_forces_scalar();
    if (scalar_env) return Isa::Scalar;
    return avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

void force_isa(std::optional<Isa> isa) noexcept {
    g_forced.store(isa ? static_cast<int>(*isa) : -1, std::memory_order_relaxed);
}

void share_batch(const ShareBatch &batch) {
    if (active_isa() == Isa::Avx2)
        share_batch_avx2(batch);
    else
        share_batch_scalar(batch);
}

namespace {

Eigen::MatrixXd run(const ModelSpec &spec, const ParamSet &params, const Eigen::MatrixXd &log_prices,
                    const Eigen::VectorXd &log_y, std::optional<Isa> isa) {
    if (spec.form == Form::Rotterdam)
        throw DemandError(ErrorCode::WrongForm, "the Rotterdam model has no share equation");
    const auto N = static_cast<Eigen::Index>(spec.n_goods);
    if (log_prices.cols() != N || log_y.size() != log_prices.rows() || params.alpha.size() != N ||
        params.beta.size() != N || params.gamma.rows() != N || params.gamma.cols() != N ||
        (spec.form == Form::QUAIDS && params.lambda.size() != N))
        throw DemandError(ErrorCode::DimensionMismatch, "share batch inputs have inconsistent shapes");
    Eigen::MatrixXd shares(log_prices.rows(), N);
    ShareBatch b;
    b.n_obs = static_cast<std::size_t>(log_prices.rows());
    b.n_goods = spec.n_goods;
    b.log_prices = log_prices.data();
    b.log_y = log_y.data();
    b.alpha = params.alpha.data();
    b.gamma = params.gamma.data();
    b.beta = params.beta.data();
    b.quadratic = spec.form == Form::QUAIDS;
    b.lambda = b.quadratic ? params.lambda.data() : nullptr;
    b.alpha0 = spec.alpha0;
    b.shares = shares.data();
    if (!isa)
        share_batch(b);
    else if (*isa == Isa::Avx2 && avx2_supported())
        share_batch_avx2(b);
    else
        share_batch_scalar(b);
    return shares;
}

} // namespace

Eigen::MatrixXd evaluate_shares(const ModelSpec &spec, const ParamSet &params, const Eigen::MatrixXd &log_prices,
                                const Eigen::VectorXd &log_y) {
    return run(spec, params, log_prices, log_y, std::nullopt);
}

Eigen::MatrixXd evaluate_shares(const ModelSpec &spec, const ParamSet &params, const Eigen::MatrixXd &log_prices,
                                const Eigen::VectorXd &log_y, Isa isa) {
    return run(spec, params, log_prices, log_y, isa);
}

std::string_view to_string(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

} // namespace demand::kernels
