document.addEventListener("DOMContentLoaded", () => console.log("app ready"));
