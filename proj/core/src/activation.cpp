#include "narrowforge/activation.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <unordered_map>

#include "narrowforge/error.hpp"

namespace narrowforge {

namespace {

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

std::unordered_map<std::string, CustomActivation>& registry() {
    static std::unordered_map<std::string, CustomActivation> r = [] {
        std::unordered_map<std::string, CustomActivation> init;
        init["tanh"] = CustomActivation{
            [](double x) { return std::tanh(x); }, true, 0.0, 1.0};
        init["sigmoid"] = CustomActivation{
            [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, true, 0.0, 0.25};
        init["linear"] = CustomActivation{[](double x) { return x; }, true, 0.0, 1.0};
        return init;
    }();
    return r;
}

}  // namespace

void register_custom_activation(const std::string& name, CustomActivation act) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    registry()[name] = std::move(act);
}

bool has_custom_activation(const std::string& name) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    return registry().count(name) > 0;
}

const CustomActivation& custom_activation(const std::string& name) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end())
        throw Error("unregistered custom activation '" + name + "'");
    return it->second;
}

ActivationTag ActivationTag::leaky_relu(double beta) {
    if (!(beta > 0.0))
        throw Error("Leaky-ReLU requires beta > 0, got " + std::to_string(beta));
    ActivationTag t(ActivationKind::LeakyRelu);
    t.beta_ = beta;
    return t;
}

ActivationTag ActivationTag::custom(std::string name) {
    ActivationTag t(ActivationKind::Custom);
    t.name_ = std::move(name);
    return t;
}

double ActivationTag::apply(double x) const {
    switch (kind_) {
        case ActivationKind::LeakyRelu: return x >= 0.0 ? x : beta_ * x;
        case ActivationKind::Relu: return x >= 0.0 ? x : 0.0;
        case ActivationKind::Identity: return x;
        case ActivationKind::Custom: return custom_activation(name_).eval(x);
    }
    return x;
}

double ActivationTag::invert(double y) const {
    switch (kind_) {
        case ActivationKind::LeakyRelu:
            return y >= 0.0 ? y : y / beta_;
        case ActivationKind::Relu:
            throw NotInvertibleError("ReLU is not strictly increasing");
        case ActivationKind::Identity:
            return y;
        case ActivationKind::Custom: {
            const CustomActivation& act = custom_activation(name_);
            if (!act.strictly_increasing)
                throw NotInvertibleError("custom activation '" + name_ +
                                         "' is not registered as strictly increasing");
            // Expand a bracket around y, then bisect.
            double lo = -1.0, hi = 1.0;
            for (int i = 0; i < 200 && act.eval(lo) > y; ++i) lo *= 2.0;
            for (int i = 0; i < 200 && act.eval(hi) < y; ++i) hi *= 2.0;
            if (act.eval(lo) > y || act.eval(hi) < y)
                throw NotInvertibleError("value " + std::to_string(y) +
                                         " outside the range of '" + name_ + "'");
            for (int i = 0; i < 200; ++i) {
                double mid = 0.5 * (lo + hi);
                if (mid == lo || mid == hi) break;
                (act.eval(mid) < y ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return y;
}

bool ActivationTag::strictly_increasing() const {
    switch (kind_) {
        case ActivationKind::LeakyRelu: return true;
        case ActivationKind::Relu: return false;
        case ActivationKind::Identity: return true;
        case ActivationKind::Custom: return custom_activation(name_).strictly_increasing;
    }
    return false;
}

bool ActivationTag::monotone() const {
    return kind_ == ActivationKind::Relu || strictly_increasing();
}

}  // namespace narrowforge
