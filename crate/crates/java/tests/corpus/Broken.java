public class Broken {
    /** Complete method. */
    void complete() {
        ok();
    }

    /** Never closed. */
    void incomplete() {
        if (x) {
            y();
    }
}
