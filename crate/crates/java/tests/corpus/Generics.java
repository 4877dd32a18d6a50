import java.util.*;
import java.util.function.Function;

public class Generics<T extends Comparable<T>> {
    /**
     * Groups values by key.
     */
    public <K, V extends List<T>> Map<K, List<V>> group(Map<K, List<V>> input, Function<? super T, ? extends K> f) {
        Map<K, List<V>> out = new HashMap<>();
        if (input.size() > 1 && input.size() < 10) {
            out.putAll(input);
        }
        return out;
    }

    // Finds the max element
    public static <E extends Comparable<? super E>> E max(Collection<? extends E> items) {
        E best = null;
        for (E e : items) {
            if (best == null || e.compareTo(best) > 0) { best = e; }
        }
        return best;
    }

    List<Map<String, Integer>>[] arrays(Map<String, List<Integer>>... maps) {
        return null;
    }
}
