# Tail Tree Toolkit — modules package
