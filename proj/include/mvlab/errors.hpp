#pragma once

#include <stdexcept>
#include <string>

namespace mvlab {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define MVLAB_DEFINE_ERROR(name) \
    struct name : error {        \
        using error::error;      \
    }

MVLAB_DEFINE_ERROR(dimension_error);
MVLAB_DEFINE_ERROR(resolvent_domain_error);
MVLAB_DEFINE_ERROR(numerical_singularity_error);
MVLAB_DEFINE_ERROR(numerical_range_error);
MVLAB_DEFINE_ERROR(ellipticity_error);
MVLAB_DEFINE_ERROR(step_size_error);
MVLAB_DEFINE_ERROR(support_mismatch_error);
MVLAB_DEFINE_ERROR(grid_error);
MVLAB_DEFINE_ERROR(coupling_error);
MVLAB_DEFINE_ERROR(config_error);
MVLAB_DEFINE_ERROR(degenerate_input_error);
MVLAB_DEFINE_ERROR(io_error);

#undef MVLAB_DEFINE_ERROR

} // namespace mvlab
