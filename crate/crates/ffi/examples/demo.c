/* cc -I crates/ffi/include crates/ffi/examples/demo.c -L target/release -ldualsep_ffi -lm -o demo */
#include <stdio.h>
#include "dualsep.h"

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s GRID_FILE\n", argv[0]);
        return 1;
    }
    DsGrid *g = NULL;
    if (ds_grid_read(argv[1], &g) != DS_STATUS_OK) {
        fprintf(stderr, "error: %s\n", ds_last_error());
        return 2;
    }
    DsAnalyticParams params = ds_analytic_params_default();
    double lambda = 0.0;
    if (ds_estimate_lambda(g, &params, NULL, 0.01, 2, 5.0, &lambda) != DS_STATUS_OK) {
        fprintf(stderr, "error: %s\n", ds_last_error());
        ds_grid_free(g);
        return 2;
    }
    printf("dualsep %s: %zu cells, lambda = %g\n", ds_version(), ds_grid_len(g), lambda);
    ds_grid_free(g);
    return 0;
}
