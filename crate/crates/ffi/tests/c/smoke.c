#include <stdio.h>
#include <string.h>

#include "sifo.h"

static const char *LATTICE = "level low high\nflow low -> high\n";
static const char *SOURCE =
    "class Card { low imm int number; high imm int pin;\n"
    "  low mut method low imm void setNumber(low imm int x); }\n";

#define CHECK(call, want)                                                   \
  do {                                                                      \
    SifoStatus got_ = (call);                                               \
    if (got_ != (want)) {                                                   \
      char *msg_ = sifo_last_error_message();                               \
      fprintf(stderr, "%s: got %d: %s\n", #call, (int)got_, msg_ ? msg_ : ""); \
      sifo_string_free(msg_);                                               \
      return 1;                                                             \
    }                                                                       \
  } while (0)

int main(void) {
  SifoProgram *program = NULL;
  SifoSession *session = NULL;
  char *text = NULL;

  CHECK(sifo_program_new(LATTICE, SOURCE, &program), SIFO_STATUS_OK);
  CHECK(sifo_program_check(program, NULL), SIFO_STATUS_OK);
  CHECK(sifo_session_start(program, "Card", "setNumber", false, &session), SIFO_STATUS_OK);
  sifo_program_free(program);

  CHECK(sifo_session_apply(session, "Variable @ eA x"), SIFO_STATUS_REJECTED);
  CHECK(sifo_session_apply(session, "FieldAssignment @ eA low mut Card number"), SIFO_STATUS_OK);
  if (sifo_session_hole_count(session) != 2) return 1;
  CHECK(sifo_session_apply(session, "Variable @ eA1 this"), SIFO_STATUS_OK);
  CHECK(sifo_session_apply(session, "Variable @ eA2 x"), SIFO_STATUS_OK);
  if (!sifo_session_is_complete(session)) return 1;
  CHECK(sifo_session_verify(session), SIFO_STATUS_OK);
  CHECK(sifo_session_export(session, &text), SIFO_STATUS_OK);
  if (strstr(text, "this.number = x;") == NULL) return 1;
  printf("%s\n", text);
  sifo_string_free(text);
  sifo_session_free(session);
  return 0;
}
