#include "pasmr/kernels.hpp"

#include <stdexcept>

namespace pasmr {

namespace {
const Kernels* g_active = nullptr;
KernelBackend g_backend = KernelBackend::Auto;

const Kernels* pick(KernelBackend backend) {
    switch (backend) {
        case KernelBackend::Scalar:
            return &scalar_kernels();
        case KernelBackend::Avx2:
            if (!avx2_supported())
                throw std::runtime_error("kernels: avx2 requested but not supported by this CPU");
            return &avx2_kernels();
        case KernelBackend::Auto:
        default:
            return avx2_supported() ? &avx2_kernels() : &scalar_kernels();
    }
}
}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void set_kernel_backend(KernelBackend backend) {
    g_backend = backend;
    g_active = pick(backend);
}

KernelBackend parse_kernel_backend(const std::string& name) {
    if (name == "auto") return KernelBackend::Auto;
    if (name == "scalar") return KernelBackend::Scalar;
    if (name == "avx2") return KernelBackend::Avx2;
    throw std::invalid_argument("kernels: unknown backend '" + name + "' (auto|scalar|avx2)");
}

std::string kernel_backend_name() { return K().name; }

const Kernels& K() {
    if (g_active == nullptr) g_active = pick(g_backend);
    return *g_active;
}

}  // namespace pasmr
