#include <stdio.h>
#include <string.h>
#include "expandnet.h"

#define CHECK(call)                                                            \
    do {                                                                       \
        int32_t rc_ = (call);                                                  \
        if (rc_ != EXPANDNET_OK) {                                             \
            fprintf(stderr, "%s -> %d: %s\n", #call, rc_,                      \
                    expandnet_last_error_message());                           \
            return 1;                                                          \
        }                                                                      \
    } while (0)

int main(void) {
    ExpandnetModel *base = NULL, *expanded = NULL, *compact = NULL;
    CHECK(expandnet_build("smallnet7-3conv-c10", EXPANDNET_DTYPE_F64, 7, &base));
    CHECK(expandnet_expand(base, EXPANDNET_EXPAND_CL | EXPANDNET_EXPAND_FC, 4, 3, false, 7, &expanded));
    CHECK(expandnet_compress(expanded, &compact));

    size_t n_base = 0, n_compact = 0, shape[3];
    CHECK(expandnet_param_count(base, &n_base));
    CHECK(expandnet_param_count(compact, &n_compact));
    CHECK(expandnet_input_shape(compact, shape));
    if (n_base != n_compact || shape[0] != 3 || shape[1] != 32) {
        fprintf(stderr, "unexpected counts %zu %zu\n", n_base, n_compact);
        return 1;
    }

    static double input[3 * 32 * 32];
    for (size_t i = 0; i < sizeof input / sizeof input[0]; i++) {
        input[i] = (double)((i * 31) % 17) / 8.0 - 1.0;
    }
    double a[10], b[10];
    CHECK(expandnet_forward_f64(expanded, input, 1, a, 10));
    CHECK(expandnet_forward_f64(compact, input, 1, b, 10));
    double worst = 0.0;
    for (int i = 0; i < 10; i++) {
        double d = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
        if (d > worst) worst = d;
    }
    if (worst > 1e-9) {
        fprintf(stderr, "expanded and compact disagree by %g\n", worst);
        return 1;
    }

    ExpandnetModel *again = NULL;
    if (expandnet_compress(base, &again) != EXPANDNET_ERR_COMPRESSION ||
        strlen(expandnet_last_error_message()) == 0) {
        fprintf(stderr, "compressing a compact model should fail\n");
        return 1;
    }

    expandnet_model_free(base);
    expandnet_model_free(expanded);
    expandnet_model_free(compact);
    printf("ok %zu params, max diff %g\n", n_base, worst);
    return 0;
}
