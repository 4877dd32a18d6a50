/*
 * Licensed to the Apache Software Foundation (ASF) under one
 * or more contributor license agreements.
 */
package org.apache.example;

import java.util.List;

/**
 * Class-level doc.
 */
@SuppressWarnings("serial")
public class License implements java.io.Serializable {

    public License() { }

    /** Documented method. */
    public List<String> names() { return null; }
}
