import java.lang.annotation.*;

@Retention(RetentionPolicy.RUNTIME)
@Target({ElementType.METHOD, ElementType.TYPE})
public @interface AnnotationType {
    String value() default "{";
    int[] codes() default {1, 2};
    Class<?> type() default Object.class;
}

class UsesIt {
    /** Annotated with the type above. */
    @AnnotationType(value = "}", codes = {3})
    void use() { }
}
