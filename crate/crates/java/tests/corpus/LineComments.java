class LineComments {
    // First line of comment.
    // Second line of comment.
    void twoLines() { }

    // Detached comment.

    // Attached comment.
    void detached() { }

    int field; // trailing comment
    void noComment() { }

    /* plain block comment */
    void blockComment() { }

    /** Javadoc wins */ // then a trailing note
    void trailingNote() { }
}
