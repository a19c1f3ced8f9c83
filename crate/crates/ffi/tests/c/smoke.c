#include <stdio.h>
#include <string.h>

#include "parlrag.h"

static int fail(const char *what, ParlragStatus status) {
    const char *err = parlrag_last_error();
    fprintf(stderr, "%s: status %d: %s\n", what, (int)status, err ? err : "(none)");
    return 1;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke DATA_DIR\n");
        return 2;
    }
    ParlragEngine *engine = NULL;
    ParlragStatus status = parlrag_engine_open(argv[1], NULL, &engine);
    if (status != PARLRAG_STATUS_OK) return fail("open", status);

    char *json = NULL;
    status = parlrag_health(engine, &json);
    if (status != PARLRAG_STATUS_OK) return fail("health", status);
    printf("health %s\n", json);
    parlrag_string_free(json);

    status = parlrag_query(engine, "{\"query\": \"offshore wind\", \"k\": 2}", &json);
    if (status != PARLRAG_STATUS_OK) return fail("query", status);
    printf("query %s\n", json);
    parlrag_string_free(json);

    status = parlrag_query(engine, "{\"query\": \"\"}", &json);
    if (status != PARLRAG_STATUS_INVALID_REQUEST) return fail("empty query", status);
    printf("error %s\n", parlrag_last_error());

    status = parlrag_source(engine, "missing:0#0", &json);
    if (status != PARLRAG_STATUS_NOT_FOUND) return fail("source", status);

    parlrag_engine_free(engine);
    printf("version %s\n", parlrag_version());
    return 0;
}
