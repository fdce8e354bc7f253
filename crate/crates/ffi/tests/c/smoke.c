#include <stdio.h>
#include <string.h>
#include "pls.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,    \
                    pls_last_error_message());                        \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double beta[] = {0.2, 1.5, -1.0};
    PlsDataset *ds = NULL;
    CHECK(pls_dataset_synthetic(60, beta, 3, 7, &ds) == PLS_STATUS_OK);
    size_t rows = 0, cols = 0;
    CHECK(pls_dataset_shape(ds, &rows, &cols) == PLS_STATUS_OK);
    CHECK(rows == 60 && cols == 2);

    double mean[] = {0.0, 0.0};
    double lm = 1.0;
    CHECK(pls_log_marginal(NULL, NULL, 0, 1, mean, 2.0, &lm) == PLS_STATUS_OK);
    CHECK(lm > -1e-9 && lm < 1e-9);

    PlsRunResult *run = NULL;
    CHECK(pls_run_self_training(ds, 0.2, 0.3, 7, "ppp", 3, &run) == PLS_STATUS_OK);
    size_t n = 0;
    CHECK(pls_run_n_records(run, &n) == PLS_STATUS_OK && n == 4);
    int64_t idx = 0;
    CHECK(pls_run_selected_index(run, 3, &idx) == PLS_STATUS_OK && idx == -1);
    double acc = -1.0;
    CHECK(pls_run_accuracy(run, 0, &acc) == PLS_STATUS_OK && acc >= 0.0 && acc <= 1.0);
    char *json = NULL;
    CHECK(pls_run_to_json(run, &json) == PLS_STATUS_OK);
    CHECK(strstr(json, "\"records\"") != NULL);
    pls_string_free(json);

    CHECK(pls_run_accuracy(run, 99, &acc) == PLS_STATUS_INVALID_ARGUMENT);
    CHECK(strlen(pls_last_error_message()) > 0);
    CHECK(pls_run_n_records(NULL, &n) == PLS_STATUS_NULL_POINTER);
    PlsRunResult *bad = NULL;
    CHECK(pls_run_self_training(ds, 0.2, 0.3, 7, "nonsense", -1, &bad) == PLS_STATUS_INVALID_ARGUMENT);
    CHECK(bad == NULL);

    pls_run_free(run);
    pls_dataset_free(ds);
    printf("ok %s\n", pls_version());
    return 0;
}
