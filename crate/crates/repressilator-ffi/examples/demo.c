/* Minimal C consumer of the repressilator library.
 *
 * Build (from the workspace root, after `cargo build -p repressilator-ffi`):
 *
 *   cc crates/repressilator-ffi/examples/demo.c \
 *      -Icrates/repressilator-ffi/include \
 *      -Ltarget/debug -lrepressilator_ffi -lm -lpthread -ldl \
 *      -o demo
 *   LD_LIBRARY_PATH=target/debug ./demo
 */
#include <stdio.h>

#include "repressilator.h"

int main(void) {
    printf("repressilator %s\n", rp_version());

    const char *config = "{\"model\": {\"horizon\": 1.0}}";
    RpDataset *dataset = NULL;
    if (rp_dataset_generate(config, 7, &dataset) != RP_STATUS_OK) {
        fprintf(stderr, "dataset: %s\n", rp_last_error_message());
        return 1;
    }
    printf("observations: %zu\n", rp_dataset_n_observations(dataset));

    double theta[4] = {0.85, 2.6, 216.0, 0.85};
    double log_lik = 0.0;
    if (rp_log_likelihood(dataset, theta, 50, 1, &log_lik) != RP_STATUS_OK) {
        fprintf(stderr, "likelihood: %s\n", rp_last_error_message());
        rp_dataset_free(dataset);
        return 1;
    }
    printf("log-likelihood at the generating values: %f\n", log_lik);

    RpNpmcResult *result = NULL;
    if (rp_npmc_run(dataset, 20, 2, 20, 3, &result) != RP_STATUS_OK) {
        fprintf(stderr, "npmc: %s\n", rp_last_error_message());
        rp_dataset_free(dataset);
        return 1;
    }
    double mean[4] = {0};
    rp_npmc_result_posterior_mean(result, mean);
    printf("posterior mean: Q=%.3f m=%.3f alpha=%.1f beta_a=%.3f\n",
           mean[0], mean[1], mean[2], mean[3]);

    rp_npmc_result_free(result);
    rp_dataset_free(dataset);
    return 0;
}
